#include "feedloop/types.hpp"

#include <set>

#include "feedloop/errors.hpp"

namespace feedloop {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::text:
      return "text";
    case Modality::vision_text:
      return "vision-text";
  }
  return "text";
}

Modality modality_from_string(const std::string& name) {
  if (name == "text") return Modality::text;
  if (name == "vision-text") return Modality::vision_text;
  throw ConfigError("unknown modality \"" + name + "\" (expected text or vision-text)");
}

bool same_decoding(const SamplingParams& a, const SamplingParams& b) {
  return a.temperature == b.temperature && a.top_p == b.top_p && a.max_tokens == b.max_tokens;
}

void assert_deconfounded(const CandidateSet& set) {
  std::set<long long> seeds;
  for (const auto& c : set.candidates) {
    if (!same_decoding(c.params, set.params_template)) {
      throw PreconditionError("candidate " + c.response_id +
                              " has decoding params differing from the set template");
    }
    if (!seeds.insert(c.params.seed).second) {
      throw PreconditionError("candidate " + c.response_id + " repeats seed " +
                              std::to_string(c.params.seed));
    }
  }
}

void to_json(nlohmann::json& j, const ModelEndpoint& e) {
  j = nlohmann::json{{"id", e.id},
                     {"base_url", e.base_url},
                     {"model_name", e.model_name},
                     {"auth_ref", e.auth_ref},
                     {"modality", to_string(e.modality)}};
}

void from_json(const nlohmann::json& j, ModelEndpoint& e) {
  e.id = j.value("id", "");
  e.base_url = j.at("base_url").get<std::string>();
  e.model_name = j.value("model_name", "");
  e.auth_ref = j.value("auth_ref", "");
  e.modality = modality_from_string(j.value("modality", "text"));
}

void to_json(nlohmann::json& j, const SamplingParams& p) {
  j = nlohmann::json{{"temperature", p.temperature},
                     {"top_p", p.top_p},
                     {"max_tokens", p.max_tokens},
                     {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, SamplingParams& p) {
  p.temperature = j.at("temperature").get<double>();
  p.top_p = j.at("top_p").get<double>();
  p.max_tokens = j.at("max_tokens").get<int>();
  p.seed = j.at("seed").get<long long>();
}

void to_json(nlohmann::json& j, const Instruction& ins) {
  j = nlohmann::json{{"id", ins.id}, {"prompt", ins.prompt}, {"source_tag", ins.source_tag}};
  j["image"] = ins.image ? nlohmann::json(*ins.image) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, Instruction& ins) {
  ins.id = j.at("id").get<std::string>();
  ins.prompt = j.at("prompt").get<std::string>();
  if (j.contains("image") && !j["image"].is_null()) {
    ins.image = j["image"].get<std::string>();
  } else {
    ins.image.reset();
  }
  ins.source_tag = j.value("source_tag", "");
}

void to_json(nlohmann::json& j, const CandidateResponse& c) {
  j = nlohmann::json{{"response_id", c.response_id},
                     {"text", c.text},
                     {"params", c.params},
                     {"generated_by", c.generated_by}};
}

void from_json(const nlohmann::json& j, CandidateResponse& c) {
  c.response_id = j.at("response_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.params = j.at("params").get<SamplingParams>();
  c.generated_by = j.value("generated_by", "");
}

void to_json(nlohmann::json& j, const CandidateSet& s) {
  j = nlohmann::json{{"instruction_id", s.instruction_id},
                     {"candidates", s.candidates},
                     {"params_template", s.params_template}};
}

void from_json(const nlohmann::json& j, CandidateSet& s) {
  s.instruction_id = j.at("instruction_id").get<std::string>();
  s.candidates = j.at("candidates").get<std::vector<CandidateResponse>>();
  s.params_template = j.at("params_template").get<SamplingParams>();
}

}  // namespace feedloop
