#include "feedloop/loop.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <thread>

#include <unistd.h>

#include "feedloop/annotate.hpp"
#include "feedloop/backend.hpp"
#include "feedloop/errors.hpp"
#include "feedloop/generate.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/log.hpp"
#include "feedloop/pairs.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace fs = std::filesystem;

namespace {

/// One driver per run directory. The lock file holds the owner's PID; a lock
/// whose process is gone counts as stale and is taken over.
class RunLock {
 public:
  explicit RunLock(const std::string& run_dir) : path_(run_dir + "/LOCK") {
    if (fs::exists(path_)) {
      const std::string content = util::read_text_file(path_);
      const long pid = std::strtol(content.c_str(), nullptr, 10);
      if (pid > 0 && pid != static_cast<long>(::getpid()) &&
          ::kill(static_cast<pid_t>(pid), 0) == 0) {
        throw PreconditionError("run directory is locked by running pid " + std::to_string(pid));
      }
      log::warn("taking over stale lock " + path_);
    }
    util::write_text_file_atomic(path_, std::to_string(::getpid()) + "\n");
    held_ = true;
  }

  ~RunLock() {
    if (held_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
  bool held_ = false;
};

std::string fill_hook(std::string text, const std::string& dataset, const std::string& base_model,
                      const std::string& out_dir) {
  text = util::fill_placeholder(std::move(text), "dataset", dataset);
  text = util::fill_placeholder(std::move(text), "base_model", base_model);
  return util::fill_placeholder(std::move(text), "out_dir", out_dir);
}

// ---------------------------------------------------------------------------
// stage bodies

void stage_generating(LoopState& state, const RunConfig& config, const LoopOptions& options) {
  const auto pool = read_instructions(state.run_dir + "/" + state.pool_path);
  const long long begin = state.pool_cursor;
  const long long end = begin + state.instructions_per_iter;
  if (end > static_cast<long long>(pool.size())) {
    throw InsufficientInstructions(
        "iteration " + std::to_string(state.iteration_index) + " needs " +
        std::to_string(state.instructions_per_iter) + " instructions, pool has " +
        std::to_string(pool.size() - begin) + " unused");
  }
  const std::vector<Instruction> slice(pool.begin() + begin, pool.begin() + end);

  fs::create_directories(state.iter_dir());
  write_instructions(state.iter_dir() + "/instructions.jsonl", slice);

  auto backend = make_backend(state.policy, config.backend);
  GenerateOptions gen;
  gen.n = config.generation.n;
  gen.params_template = config.generation.params_template();
  gen.seed_base = config.generation.seed_base;
  gen.max_workers = options.max_workers;

  std::vector<CandidateSet> sets;
  sets.reserve(slice.size());
  for (const auto& ins : slice) {
    sets.push_back(generate_candidates(*backend, ins, gen));
  }
  write_candidate_sets(state.iter_dir() + "/candidates.jsonl", sets);

  state.pool_cursor = end;
  state.status = LoopStage::annotating;
  save_state(state);
}

void stage_annotating(LoopState& state, const RunConfig& config, const LoopOptions& options) {
  const auto instructions = read_instructions(state.iter_dir() + "/instructions.jsonl");
  const auto sets = read_candidate_sets(state.iter_dir() + "/candidates.jsonl");
  std::map<std::string, const Instruction*> by_id;
  for (const auto& ins : instructions) by_id[ins.id] = &ins;

  const AnnotateOptions opts = annotate_options_from(config, options.max_workers);
  auto labeler = make_backend(state.labeler, config.backend);
  std::shared_ptr<Backend> text_backend;
  if (opts.strategy != Strategy::SELF_REWARD) {
    if (!state.text_backend) {
      throw ConfigError("annotation.text_backend: required for claim-splitting strategies");
    }
    text_backend = make_backend(*state.text_backend, config.backend);
  } else {
    text_backend = labeler;
  }

  std::vector<AnnotatedSet> annotated;
  annotated.reserve(sets.size());
  for (const auto& set : sets) {
    auto it = by_id.find(set.instruction_id);
    if (it == by_id.end()) {
      throw SchemaError("candidate set for unknown instruction " + set.instruction_id);
    }
    annotated.push_back(annotate_set(*labeler, *text_backend, *it->second, set, opts));
  }
  write_annotated_sets(state.iter_dir() + "/scores.jsonl", annotated);

  state.status = LoopStage::pairing;
  save_state(state);
}

void stage_pairing(LoopState& state, const RunConfig& config, const LoopOptions&) {
  const auto instructions = read_instructions(state.iter_dir() + "/instructions.jsonl");
  const auto sets = read_candidate_sets(state.iter_dir() + "/candidates.jsonl");
  const auto annotated = read_annotated_sets(state.iter_dir() + "/scores.jsonl");

  std::map<std::string, std::string> text_by_response;
  for (const auto& set : sets) {
    for (const auto& c : set.candidates) text_by_response[c.response_id] = c.text;
  }

  std::vector<InstructionScores> inputs;
  inputs.reserve(annotated.size());
  for (const auto& a : annotated) {
    InstructionScores in;
    in.instruction_id = a.instruction_id;
    for (const auto& s : a.scores) {
      if (config.pairing.exclude_zero_claim && s.zero_claims) continue;
      auto it = text_by_response.find(s.response_id);
      if (it == text_by_response.end()) {
        throw SchemaError("score for unknown response " + s.response_id);
      }
      in.scored.push_back(ScoredResponse{s.response_id, it->second, s.score});
    }
    inputs.push_back(std::move(in));
  }

  PairOptions pair_opts;
  pair_opts.max_pairs_per_instruction = config.pairing.max_pairs_per_instruction;
  pair_opts.dedup_identical_texts = config.pairing.dedup_identical_texts;
  const std::uint64_t base_seed = state.seed + static_cast<std::uint64_t>(state.iteration_index);
  const PairDataset dataset =
      build_pair_dataset(inputs, base_seed, pair_opts, config.pairing.cap_then_filter);

  std::map<std::string, Instruction> ins_by_id;
  for (const auto& ins : instructions) ins_by_id[ins.id] = ins;
  write_pairs_detail(state.iter_dir() + "/pairs_detail.jsonl", dataset);
  write_trainer_dataset(state.iter_dir() + "/dataset.jsonl", dataset, ins_by_id);

  state.datasets.push_back("iter-" + std::to_string(state.iteration_index) + "/dataset.jsonl");
  state.status = LoopStage::awaiting_trainer;
  save_state(state);
}

void stage_awaiting_trainer(LoopState& state, const RunConfig& config, const LoopOptions&) {
  const std::string iter_dir = state.iter_dir();
  const std::string base_model_path = iter_dir + "/base_endpoint.json";
  util::write_text_file_atomic(base_model_path, nlohmann::json(state.policy).dump(2) + "\n");

  const std::string dataset_path = iter_dir + "/dataset.jsonl";
  const std::string signal_path = fill_hook(config.loop.trainer_hook.completion_signal,
                                            dataset_path, base_model_path, iter_dir);

  // A manifest that already exists (a finished trainer, or a resumed run)
  // is consumed as-is instead of retraining.
  if (!fs::exists(signal_path)) {
    if (config.loop.trainer_hook.command_template.empty()) {
      throw ConfigError("loop.trainer_hook.command_template: required to run the loop");
    }
    const std::string command = fill_hook(config.loop.trainer_hook.command_template, dataset_path,
                                          base_model_path, iter_dir);
    log::info("invoking trainer: " + command);
    const int status = std::system(command.c_str());
    if (status != 0) {
      throw TrainerFailed("trainer command exited with status " + std::to_string(status));
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::seconds(config.loop.trainer_hook.timeout_s);
    while (!fs::exists(signal_path)) {
      if (std::chrono::steady_clock::now() >= deadline) {
        throw TrainerTimeout("no completion manifest at " + signal_path + " within " +
                             std::to_string(config.loop.trainer_hook.timeout_s) + "s");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(config.loop.trainer_hook.poll_ms));
    }
  }

  nlohmann::json manifest =
      nlohmann::json::parse(util::read_text_file(signal_path), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw TrainerFailed("trainer manifest " + signal_path + " is not a JSON object");
  }
  ModelEndpoint next;
  try {
    next = manifest.get<ModelEndpoint>();
  } catch (const std::exception& e) {
    throw TrainerFailed("trainer manifest " + signal_path + " is not a valid endpoint: " +
                        e.what());
  }
  if (next.base_url.empty()) {
    throw TrainerFailed("trainer manifest " + signal_path + " lacks base_url");
  }
  next.id = "policy-iter" + std::to_string(state.iteration_index + 1);
  if (next.auth_ref.empty()) next.auth_ref = state.policy.auth_ref;
  state.policy = next;
  if (config.loop.labeler_follows_policy) {
    ModelEndpoint follow = next;
    follow.id = "labeler-iter" + std::to_string(state.iteration_index + 1);
    state.labeler = follow;
  }

  state.iteration_index += 1;
  state.status = state.iteration_index >= state.iterations_total ? LoopStage::complete
                                                                 : LoopStage::generating;
  save_state(state);
}

}  // namespace

std::string to_string(LoopStage s) {
  switch (s) {
    case LoopStage::generating:
      return "generating";
    case LoopStage::annotating:
      return "annotating";
    case LoopStage::pairing:
      return "pairing";
    case LoopStage::awaiting_trainer:
      return "awaiting_trainer";
    case LoopStage::complete:
      return "complete";
    case LoopStage::failed:
      return "failed";
  }
  return "failed";
}

LoopStage stage_from_string(const std::string& name) {
  if (name == "generating") return LoopStage::generating;
  if (name == "annotating") return LoopStage::annotating;
  if (name == "pairing") return LoopStage::pairing;
  if (name == "awaiting_trainer") return LoopStage::awaiting_trainer;
  if (name == "complete") return LoopStage::complete;
  if (name == "failed") return LoopStage::failed;
  throw CorruptCheckpoint("unknown loop stage \"" + name + "\"");
}

std::string LoopState::iter_dir() const {
  return run_dir + "/iter-" + std::to_string(iteration_index);
}

LoopState init_run(const std::string& run_dir, const RunConfig& config,
                   const std::string& instructions_path, std::uint64_t seed) {
  if (fs::exists(run_dir + "/state.json")) {
    throw PreconditionError(run_dir + " already holds a run; resume it instead");
  }
  fs::create_directories(run_dir);

  auto pool = read_instructions(instructions_path);
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  write_instructions(run_dir + "/pool.jsonl", pool);
  util::write_text_file_atomic(run_dir + "/effective_config.json",
                               config_to_json(config).dump(2) + "\n");

  LoopState state;
  state.run_dir = run_dir;
  state.iterations_total = config.loop.iterations;
  state.instructions_per_iter = config.loop.instructions_per_iter;
  state.pool_path = "pool.jsonl";
  state.seed = seed;
  if (config.generation.endpoint.empty()) {
    throw ConfigError("generation.endpoint: required to run the loop");
  }
  if (config.annotation.labeler.empty()) {
    throw ConfigError("annotation.labeler: required to run the loop");
  }
  state.policy = config.endpoint_by_id(config.generation.endpoint);
  state.labeler = config.endpoint_by_id(config.annotation.labeler);
  if (!config.annotation.text_backend.empty()) {
    state.text_backend = config.endpoint_by_id(config.annotation.text_backend);
  }
  save_state(state);
  return state;
}

void save_state(const LoopState& state) {
  nlohmann::json j;
  j["schema"] = kLoopStateSchema;
  j["iteration_index"] = state.iteration_index;
  j["status"] = to_string(state.status);
  j["failed_stage"] = state.failed_stage;
  j["iterations_total"] = state.iterations_total;
  j["instructions_per_iter"] = state.instructions_per_iter;
  j["pool_path"] = state.pool_path;
  j["pool_cursor"] = state.pool_cursor;
  j["policy"] = state.policy;
  j["labeler"] = state.labeler;
  j["text_backend"] = state.text_backend ? nlohmann::json(*state.text_backend)
                                         : nlohmann::json(nullptr);
  j["datasets"] = state.datasets;
  j["seed"] = state.seed;
  util::write_text_file_atomic(state.run_dir + "/state.json", j.dump(2) + "\n");
}

LoopState load_state(const std::string& run_dir) {
  const std::string path = run_dir + "/state.json";
  std::string raw;
  try {
    raw = util::read_text_file(path);
  } catch (const IoError& e) {
    throw CorruptCheckpoint(e.what());
  }
  const nlohmann::json j = nlohmann::json::parse(raw, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw CorruptCheckpoint(path + " is not a JSON object");
  }
  if (j.value("schema", "") != kLoopStateSchema) {
    throw CorruptCheckpoint(path + " has schema \"" + j.value("schema", "") + "\", expected " +
                            kLoopStateSchema);
  }
  LoopState state;
  state.run_dir = run_dir;
  try {
    state.iteration_index = j.at("iteration_index").get<int>();
    state.status = stage_from_string(j.at("status").get<std::string>());
    state.failed_stage = j.value("failed_stage", "");
    state.iterations_total = j.at("iterations_total").get<int>();
    state.instructions_per_iter = j.at("instructions_per_iter").get<long long>();
    state.pool_path = j.at("pool_path").get<std::string>();
    state.pool_cursor = j.at("pool_cursor").get<long long>();
    state.policy = j.at("policy").get<ModelEndpoint>();
    state.labeler = j.at("labeler").get<ModelEndpoint>();
    if (j.contains("text_backend") && !j["text_backend"].is_null()) {
      state.text_backend = j["text_backend"].get<ModelEndpoint>();
    }
    state.datasets = j.at("datasets").get<std::vector<std::string>>();
    state.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(path + ": " + e.what());
  }
  return state;
}

LoopState drive(LoopState state, const RunConfig& config, const LoopOptions& options) {
  RunLock lock(state.run_dir);

  if (state.status == LoopStage::failed) {
    if (state.failed_stage.empty()) {
      throw CorruptCheckpoint("state is failed but records no failed stage");
    }
    state.status = stage_from_string(state.failed_stage);
    state.failed_stage.clear();
  }

  while (state.status != LoopStage::complete) {
    if (options.until && state.status == *options.until) break;
    const LoopStage current = state.status;
    try {
      switch (current) {
        case LoopStage::generating:
          stage_generating(state, config, options);
          break;
        case LoopStage::annotating:
          stage_annotating(state, config, options);
          break;
        case LoopStage::pairing:
          stage_pairing(state, config, options);
          break;
        case LoopStage::awaiting_trainer:
          stage_awaiting_trainer(state, config, options);
          break;
        case LoopStage::complete:
        case LoopStage::failed:
          return state;
      }
    } catch (...) {
      state.status = LoopStage::failed;
      state.failed_stage = to_string(current);
      save_state(state);
      throw;
    }
  }
  return state;
}

}  // namespace feedloop
