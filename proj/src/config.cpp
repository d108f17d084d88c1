#include "feedloop/config.hpp"

#include <filesystem>
#include <set>

#include "feedloop/errors.hpp"
#include "feedloop/prompts.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& message) {
  throw ConfigError(field + ": " + message);
}

const json& section(const json& j, const std::string& name) {
  static const json empty = json::object();
  if (!j.contains(name)) return empty;
  if (!j[name].is_object()) fail(name, "must be an object");
  return j[name];
}

template <typename T>
T field_or(const json& j, const std::string& section_name, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    fail(section_name + "." + key, "has the wrong type");
  }
}

void check_endpoint_ref(const RunConfig& cfg, const std::string& field, const std::string& id) {
  if (id.empty()) return;  // unset references are resolved lazily at use time
  for (const auto& e : cfg.endpoints) {
    if (e.id == id) return;
  }
  fail(field, "references unknown endpoint id \"" + id + "\"");
}

std::string resolve_mock_path(const std::string& base_url, const std::string& config_dir) {
  if (base_url.rfind("mock:", 0) != 0 || config_dir.empty()) return base_url;
  const std::string path = base_url.substr(5);
  if (path.empty() || path.front() == '/') return base_url;
  return "mock:" + (std::filesystem::path(config_dir) / path).lexically_normal().string();
}

}  // namespace

SamplingParams GenerationConfig::params_template() const {
  SamplingParams p;
  p.temperature = temperature;
  p.top_p = top_p;
  p.max_tokens = max_tokens;
  p.seed = 0;
  return p;
}

const ModelEndpoint& RunConfig::endpoint_by_id(const std::string& id) const {
  for (const auto& e : endpoints) {
    if (e.id == id) return e;
  }
  throw ConfigError("endpoints: no endpoint with id \"" + id + "\"");
}

RunConfig validate_config(const json& j, const std::string& config_dir) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;

  // endpoints
  if (j.contains("endpoints")) {
    if (!j["endpoints"].is_array()) fail("endpoints", "must be an array");
    std::set<std::string> ids;
    std::size_t index = 0;
    for (const auto& ej : j["endpoints"]) {
      const std::string field = "endpoints[" + std::to_string(index++) + "]";
      ModelEndpoint e;
      try {
        e = ej.get<ModelEndpoint>();
      } catch (const json::exception& ex) {
        fail(field, ex.what());
      }
      if (e.id.empty()) fail(field + ".id", "must be nonempty");
      if (e.base_url.empty()) fail(field + ".base_url", "must be nonempty");
      if (!ids.insert(e.id).second) fail(field + ".id", "duplicate id \"" + e.id + "\"");
      e.base_url = resolve_mock_path(e.base_url, config_dir);
      cfg.endpoints.push_back(std::move(e));
    }
  }

  // generation
  {
    const json& g = section(j, "generation");
    cfg.generation.n = field_or(g, "generation", "n", cfg.generation.n);
    cfg.generation.temperature = field_or(g, "generation", "temperature", cfg.generation.temperature);
    cfg.generation.top_p = field_or(g, "generation", "top_p", cfg.generation.top_p);
    cfg.generation.max_tokens = field_or(g, "generation", "max_tokens", cfg.generation.max_tokens);
    cfg.generation.seed_base = field_or(g, "generation", "seed_base", cfg.generation.seed_base);
    cfg.generation.endpoint = field_or<std::string>(g, "generation", "endpoint", "");
    if (cfg.generation.n < 2) fail("generation.n", "must be >= 2");
    if (cfg.generation.temperature < 0.0) fail("generation.temperature", "must be >= 0");
    if (!(cfg.generation.top_p > 0.0 && cfg.generation.top_p <= 1.0)) {
      fail("generation.top_p", "must be in (0, 1]");
    }
    if (cfg.generation.max_tokens < 1) fail("generation.max_tokens", "must be >= 1");
  }

  // annotation
  {
    const json& a = section(j, "annotation");
    const std::string strategy = field_or<std::string>(a, "annotation", "strategy", "REJ_N");
    try {
      cfg.annotation.strategy = strategy_from_string(strategy);
    } catch (const ConfigError& e) {
      fail("annotation.strategy", e.what());
    }
    cfg.annotation.labeler = field_or<std::string>(a, "annotation", "labeler", "");
    cfg.annotation.text_backend = field_or<std::string>(a, "annotation", "text_backend", "");
    cfg.annotation.prepend_instruction =
        field_or(a, "annotation", "prepend_instruction", cfg.annotation.prepend_instruction);
    const std::string dim = field_or<std::string>(a, "annotation", "dimension", "hallucination");
    if (dim == "hallucination") {
      cfg.annotation.dimension = SelfRewardDimension::hallucination;
    } else if (dim == "helpfulness") {
      cfg.annotation.dimension = SelfRewardDimension::helpfulness;
    } else {
      fail("annotation.dimension", "must be hallucination or helpfulness");
    }
    cfg.annotation.prompt_dir = field_or<std::string>(a, "annotation", "prompt_dir", "");
  }

  // pairing
  {
    const json& p = section(j, "pairing");
    cfg.pairing.max_pairs_per_instruction =
        field_or(p, "pairing", "max_pairs_per_instruction", cfg.pairing.max_pairs_per_instruction);
    cfg.pairing.cap_then_filter = field_or(p, "pairing", "cap_then_filter", cfg.pairing.cap_then_filter);
    cfg.pairing.dedup_identical_texts =
        field_or(p, "pairing", "dedup_identical_texts", cfg.pairing.dedup_identical_texts);
    cfg.pairing.exclude_zero_claim =
        field_or(p, "pairing", "exclude_zero_claim", cfg.pairing.exclude_zero_claim);
    if (cfg.pairing.max_pairs_per_instruction < 1) {
      fail("pairing.max_pairs_per_instruction", "must be >= 1");
    }
  }

  // loop
  {
    const json& l = section(j, "loop");
    cfg.loop.iterations = field_or(l, "loop", "iterations", cfg.loop.iterations);
    cfg.loop.instructions_per_iter =
        field_or(l, "loop", "instructions_per_iter", cfg.loop.instructions_per_iter);
    cfg.loop.labeler_follows_policy =
        field_or(l, "loop", "labeler_follows_policy", cfg.loop.labeler_follows_policy);
    if (cfg.loop.iterations < 1) fail("loop.iterations", "must be >= 1");
    if (cfg.loop.instructions_per_iter < 1) fail("loop.instructions_per_iter", "must be >= 1");
    if (l.contains("trainer_hook")) {
      const json& t = l["trainer_hook"];
      if (!t.is_object()) fail("loop.trainer_hook", "must be an object");
      cfg.loop.trainer_hook.command_template =
          field_or<std::string>(t, "loop.trainer_hook", "command_template", "");
      cfg.loop.trainer_hook.completion_signal = field_or<std::string>(
          t, "loop.trainer_hook", "completion_signal", cfg.loop.trainer_hook.completion_signal);
      cfg.loop.trainer_hook.timeout_s =
          field_or(t, "loop.trainer_hook", "timeout_s", cfg.loop.trainer_hook.timeout_s);
      cfg.loop.trainer_hook.poll_ms =
          field_or(t, "loop.trainer_hook", "poll_ms", cfg.loop.trainer_hook.poll_ms);
      if (cfg.loop.trainer_hook.timeout_s < 1) fail("loop.trainer_hook.timeout_s", "must be >= 1");
      if (cfg.loop.trainer_hook.poll_ms < 1) fail("loop.trainer_hook.poll_ms", "must be >= 1");
    }
  }

  // reward
  {
    const json& r = section(j, "reward");
    cfg.reward.beta = field_or(r, "reward", "beta", cfg.reward.beta);
    cfg.reward.bon_n = field_or(r, "reward", "bon_n", cfg.reward.bon_n);
    cfg.reward.policy = field_or<std::string>(r, "reward", "policy", "");
    cfg.reward.reference = field_or<std::string>(r, "reward", "reference", "");
    const std::string selector = field_or<std::string>(r, "reward", "selector", "normalized");
    try {
      cfg.reward.selector = selector_from_string(selector);
    } catch (const ConfigError& e) {
      fail("reward.selector", e.what());
    }
    if (!(cfg.reward.beta > 0.0)) fail("reward.beta", "must be > 0");
    if (cfg.reward.bon_n < 1) fail("reward.bon_n", "must be >= 1");
  }

  // judge
  {
    const json& jj = section(j, "judge");
    cfg.judge.endpoint = field_or<std::string>(jj, "judge", "endpoint", "");
    cfg.judge.template_path = field_or<std::string>(jj, "judge", "template_path", "");
    cfg.judge.randomize_order = field_or(jj, "judge", "randomize_order", cfg.judge.randomize_order);
  }

  // backend
  {
    const json& b = section(j, "backend");
    cfg.backend.max_attempts = field_or(b, "backend", "max_attempts", cfg.backend.max_attempts);
    cfg.backend.initial_backoff_ms =
        field_or(b, "backend", "initial_backoff_ms", cfg.backend.initial_backoff_ms);
    cfg.backend.backoff_factor = field_or(b, "backend", "backoff_factor", cfg.backend.backoff_factor);
    cfg.backend.max_concurrent = field_or(b, "backend", "max_concurrent", cfg.backend.max_concurrent);
    cfg.backend.top_k = field_or(b, "backend", "top_k", cfg.backend.top_k);
    cfg.backend.timeout_s = field_or(b, "backend", "timeout_s", cfg.backend.timeout_s);
    if (cfg.backend.max_attempts < 1) fail("backend.max_attempts", "must be >= 1");
    if (cfg.backend.initial_backoff_ms < 0) fail("backend.initial_backoff_ms", "must be >= 0");
    if (cfg.backend.backoff_factor < 1.0) fail("backend.backoff_factor", "must be >= 1");
    if (cfg.backend.max_concurrent < 1) fail("backend.max_concurrent", "must be >= 1");
    if (cfg.backend.top_k < 1) fail("backend.top_k", "must be >= 1");
    if (cfg.backend.timeout_s < 1) fail("backend.timeout_s", "must be >= 1");
  }

  check_endpoint_ref(cfg, "generation.endpoint", cfg.generation.endpoint);
  check_endpoint_ref(cfg, "annotation.labeler", cfg.annotation.labeler);
  check_endpoint_ref(cfg, "annotation.text_backend", cfg.annotation.text_backend);
  check_endpoint_ref(cfg, "reward.policy", cfg.reward.policy);
  check_endpoint_ref(cfg, "reward.reference", cfg.reward.reference);
  check_endpoint_ref(cfg, "judge.endpoint", cfg.judge.endpoint);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  const std::string raw = util::read_text_file(path);
  const json j = json::parse(raw, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  const std::string dir = std::filesystem::absolute(path).parent_path().string();
  return validate_config(j, dir);
}

nlohmann::json config_to_json(const RunConfig& config) {
  json j;
  j["endpoints"] = config.endpoints;
  j["generation"] = json{{"n", config.generation.n},
                         {"temperature", config.generation.temperature},
                         {"top_p", config.generation.top_p},
                         {"max_tokens", config.generation.max_tokens},
                         {"seed_base", config.generation.seed_base},
                         {"endpoint", config.generation.endpoint}};
  j["annotation"] = json{
      {"strategy", to_string(config.annotation.strategy)},
      {"labeler", config.annotation.labeler},
      {"text_backend", config.annotation.text_backend},
      {"prepend_instruction", config.annotation.prepend_instruction},
      {"dimension", config.annotation.dimension == SelfRewardDimension::hallucination
                        ? "hallucination"
                        : "helpfulness"},
      {"prompt_dir", config.annotation.prompt_dir}};
  j["pairing"] = json{{"max_pairs_per_instruction", config.pairing.max_pairs_per_instruction},
                      {"cap_then_filter", config.pairing.cap_then_filter},
                      {"dedup_identical_texts", config.pairing.dedup_identical_texts},
                      {"exclude_zero_claim", config.pairing.exclude_zero_claim}};
  j["loop"] = json{{"iterations", config.loop.iterations},
                   {"instructions_per_iter", config.loop.instructions_per_iter},
                   {"labeler_follows_policy", config.loop.labeler_follows_policy},
                   {"trainer_hook", json{{"command_template", config.loop.trainer_hook.command_template},
                                         {"completion_signal", config.loop.trainer_hook.completion_signal},
                                         {"timeout_s", config.loop.trainer_hook.timeout_s},
                                         {"poll_ms", config.loop.trainer_hook.poll_ms}}}};
  j["reward"] = json{{"beta", config.reward.beta},
                     {"bon_n", config.reward.bon_n},
                     {"policy", config.reward.policy},
                     {"reference", config.reward.reference},
                     {"selector", to_string(config.reward.selector)}};
  j["judge"] = json{{"endpoint", config.judge.endpoint},
                    {"template_path", config.judge.template_path},
                    {"randomize_order", config.judge.randomize_order}};
  j["backend"] = json{{"max_attempts", config.backend.max_attempts},
                      {"initial_backoff_ms", config.backend.initial_backoff_ms},
                      {"backoff_factor", config.backend.backoff_factor},
                      {"max_concurrent", config.backend.max_concurrent},
                      {"top_k", config.backend.top_k},
                      {"timeout_s", config.backend.timeout_s}};
  return j;
}

std::string prompt_dir_in_effect(const RunConfig& config) {
  return config.annotation.prompt_dir.empty() ? prompts::asset_dir() + "/prompts"
                                              : config.annotation.prompt_dir;
}

AnnotateOptions annotate_options_from(const RunConfig& config, int max_workers) {
  AnnotateOptions opts;
  opts.strategy = config.annotation.strategy;
  opts.prepend_instruction = config.annotation.prepend_instruction;
  opts.max_workers = max_workers;
  const std::string dir = prompt_dir_in_effect(config);
  if (opts.strategy == Strategy::SELF_REWARD) {
    const char* name = config.annotation.dimension == SelfRewardDimension::hallucination
                           ? prompts::kSelfRewardHallucination
                           : prompts::kSelfRewardHelpfulness;
    opts.self_reward_template = util::read_text_file(dir + "/" + name);
  } else {
    opts.split_template = util::read_text_file(dir + "/" + prompts::kSplitClaims);
    opts.convert_template = util::read_text_file(dir + "/" + prompts::kConvertQuestions);
  }
  return opts;
}

}  // namespace feedloop
