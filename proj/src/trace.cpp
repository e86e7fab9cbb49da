#include "planmcts/trace.hpp"

#include <sstream>

namespace planmcts {

using nlohmann::json;

std::string stable_hash_hex(const std::string& text) {
  // FNV-1a 64
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

void EpisodeTrace::add(int iteration, std::string phase, nlohmann::json data) {
  events.push_back({iteration, std::move(phase), std::move(data)});
}

const TraceEvent* EpisodeTrace::find(const std::string& phase) const {
  for (const auto& e : events) {
    if (e.phase == phase) return &e;
  }
  return nullptr;
}

namespace {
// Bulky payloads kept in memory but dropped from non-verbose JSONL.
const char* kVerboseOnlyFields[] = {"operator_contexts", "prompt_text", "response_text"};
}  // namespace

std::string EpisodeTrace::to_jsonl(bool verbose) const {
  std::ostringstream out;
  for (const auto& e : events) {
    json j{{"i", e.iteration}, {"phase", e.phase}, {"data", e.data}};
    if (!verbose) {
      for (const char* field : kVerboseOnlyFields) j["data"].erase(field);
    }
    out << j.dump() << "\n";
  }
  return out.str();
}

EpisodeTrace EpisodeTrace::from_jsonl(const std::string& text) {
  EpisodeTrace trace;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    trace.events.push_back(
        {j.at("i").get<int>(), j.at("phase").get<std::string>(), j.at("data")});
  }
  return trace;
}

}  // namespace planmcts
