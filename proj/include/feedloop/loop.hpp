#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feedloop/config.hpp"
#include "feedloop/types.hpp"

namespace feedloop {

enum class LoopStage { generating, annotating, pairing, awaiting_trainer, complete, failed };

std::string to_string(LoopStage s);
LoopStage stage_from_string(const std::string& name);  // throws CorruptCheckpoint

/**
 * Checkpointed driver state, persisted as <run_dir>/state.json after every
 * stage transition so an interrupted run resumes at the recorded stage
 * without repeating completed work.
 */
struct LoopState {
  std::string run_dir;  // set on load/init, not serialized
  int iteration_index = 0;
  LoopStage status = LoopStage::generating;
  std::string failed_stage;  // stage that failed, when status == failed
  int iterations_total = 0;
  long long instructions_per_iter = 0;
  std::string pool_path;  // relative to run_dir
  long long pool_cursor = 0;
  ModelEndpoint policy;
  ModelEndpoint labeler;
  std::optional<ModelEndpoint> text_backend;
  std::vector<std::string> datasets;  // emitted D_i paths, relative to run_dir
  std::uint64_t seed = 0;

  std::string iter_dir() const;  // <run_dir>/iter-<iteration_index>
};

struct LoopOptions {
  /// Stop as soon as the state reaches this stage (checkpoint saved, stage
  /// not executed). Gives tests a clean mid-run interruption point.
  std::optional<LoopStage> until;
  int max_workers = 4;
};

/**
 * Creates a run directory: seeded shuffle of the instruction file into
 * <run_dir>/pool.jsonl, fresh state at iteration 0, and an effective-config
 * snapshot. Fails if the directory already holds a state file.
 */
LoopState init_run(const std::string& run_dir, const RunConfig& config,
                   const std::string& instructions_path, std::uint64_t seed);

LoopState load_state(const std::string& run_dir);  // throws CorruptCheckpoint
void save_state(const LoopState& state);

/**
 * Runs stages until the loop completes, `options.until` is reached, or a
 * stage fails (status=failed plus the stage name are checkpointed, then the
 * error is rethrown). A failed or interrupted state passed back in resumes
 * at the recorded stage. Holds the run-directory lock for the whole drive.
 */
LoopState drive(LoopState state, const RunConfig& config, const LoopOptions& options);

inline const char* kLoopStateSchema = "loop_state.v1";

}  // namespace feedloop
