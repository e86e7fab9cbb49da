#pragma once

// Episode traces: one record per phase event, replayable and serialized as
// JSON-Lines. Metrics are recomputed from these, so everything a metric
// needs must be a plain field here.

#include <string>
#include <vector>

#include <json.hpp>

namespace planmcts {

struct TraceEvent {
  int iteration = 0;  // 0 for episode-level events
  std::string phase;  // episode_start, selection, simulation, refinement,
                      // expansion, backpropagation, note, episode_end
  nlohmann::json data;
};

struct EpisodeTrace {
  std::vector<TraceEvent> events;

  void add(int iteration, std::string phase, nlohmann::json data);
  const TraceEvent* find(const std::string& phase) const;  // first match or null

  // verbose=false drops bulky payload fields (full prompt/context texts),
  // keeping their hashes and sizes.
  std::string to_jsonl(bool verbose = false) const;
  static EpisodeTrace from_jsonl(const std::string& text);
};

std::string stable_hash_hex(const std::string& text);

}  // namespace planmcts
