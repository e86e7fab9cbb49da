#ifndef PLANMCTS_H
#define PLANMCTS_H

/* C API for the plan-space MCTS engine. All operations take a JSON config
 * string and hand back a JSON result string owned by the library; free it
 * with pmx_string_free. Errors are reported as codes, with a human-readable
 * message kept on the context until the next call. */

#ifdef __cplusplus
extern "C" {
#endif

#define PMX_OK 0
#define PMX_EINVAL 1 /* bad config: unknown task, malformed JSON, bad params */
#define PMX_EIO 2    /* file could not be read or written */
#define PMX_EFAIL 3  /* runtime failure (policy, endpoint, internal) */

typedef struct pmx_ctx pmx_ctx;

pmx_ctx* pmx_ctx_new(void);
void pmx_ctx_free(pmx_ctx* ctx);

/* Message for the most recent failing call on this context; empty string
 * when the last call succeeded. Owned by the context. */
const char* pmx_last_error(const pmx_ctx* ctx);

void pmx_string_free(char* s);

/* Generate an environment file.
 * config: {"seed", "branching", "depth", "valid_paths", "distractor_ratio",
 *          "out" (optional file path)}
 * result: {"path": ...} or {"env": {...}} when no "out" is given. */
int pmx_gen_env(pmx_ctx* ctx, const char* config_json, char** result_json);

/* Run one variant over a task/seed grid.
 * config: {"env": path, "tasks": [ids]|omitted for all, "variant": name,
 *          "seeds": [ints]|count, "budget", "depth", "width", "c",
 *          "adapter": "scripted"|"llm", "epsilon", "jobs", "out", ...}
 * result: {"variant", "metrics": {...}, "records": [...]} */
int pmx_run(pmx_ctx* ctx, const char* config_json, char** result_json);

/* Run several variants ("variants": [names]) on the same grid and emit the
 * comparison table. result: {"csv", "variants": [{name, metrics}]} */
int pmx_compare(pmx_ctx* ctx, const char* config_json, char** result_json);

/* Reward/refinement ablation set on the same grid; result as pmx_compare. */
int pmx_ablate(pmx_ctx* ctx, const char* config_json, char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* PLANMCTS_H */
