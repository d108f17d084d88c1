#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feedloop/annotate.hpp"
#include "feedloop/backend.hpp"
#include "feedloop/reward.hpp"
#include "feedloop/types.hpp"

namespace feedloop {

struct GenerationConfig {
  int n = 10;
  double temperature = 1.0;
  double top_p = 0.9;
  int max_tokens = 512;
  long long seed_base = 0;
  std::string endpoint;  // endpoint id

  SamplingParams params_template() const;
};

struct AnnotationConfig {
  Strategy strategy = Strategy::REJ_N;
  std::string labeler;       // endpoint id
  std::string text_backend;  // endpoint id for split/convert
  bool prepend_instruction = false;
  SelfRewardDimension dimension = SelfRewardDimension::hallucination;
  std::string prompt_dir;  // overrides the shipped template directory when set
};

struct PairingConfig {
  int max_pairs_per_instruction = 2;
  bool cap_then_filter = true;  // false: length filter before the per-instruction cap
  bool dedup_identical_texts = false;
  bool exclude_zero_claim = false;
};

struct TrainerHookConfig {
  std::string command_template;  // placeholders: {dataset} {base_model} {out_dir}
  std::string completion_signal = "{out_dir}/trainer_manifest.json";
  int timeout_s = 3600;
  int poll_ms = 200;
};

struct LoopSettings {
  int iterations = 4;
  long long instructions_per_iter = 4000;
  TrainerHookConfig trainer_hook;
  bool labeler_follows_policy = false;
};

struct RewardConfig {
  double beta = 0.1;
  int bon_n = 32;  // documented presets: 32 and 16
  std::string policy;
  std::string reference;
  Selector selector = Selector::normalized;
};

struct JudgeSettings {
  std::string endpoint;
  std::string template_path;  // empty: shipped judge_pairwise.txt
  bool randomize_order = true;
};

struct RunConfig {
  std::vector<ModelEndpoint> endpoints;
  GenerationConfig generation;
  AnnotationConfig annotation;
  PairingConfig pairing;
  LoopSettings loop;
  RewardConfig reward;
  JudgeSettings judge;
  BackendOptions backend;

  const ModelEndpoint& endpoint_by_id(const std::string& id) const;  // throws ConfigError
};

/// Parses and range-checks a config JSON. `config_dir` anchors relative
/// mock-fixture paths. Never touches the network. Throws ConfigError with the
/// offending field path.
RunConfig validate_config(const nlohmann::json& j, const std::string& config_dir);

/// read file + parse + validate_config.
RunConfig load_config(const std::string& path);

/// Effective-config snapshot, suitable for writing into a run directory.
nlohmann::json config_to_json(const RunConfig& config);

/// The template directory in effect: annotation.prompt_dir when set, else the
/// shipped assets.
std::string prompt_dir_in_effect(const RunConfig& config);

/// Builds annotation options with the right templates loaded for the
/// configured strategy and dimension.
AnnotateOptions annotate_options_from(const RunConfig& config, int max_workers);

}  // namespace feedloop
