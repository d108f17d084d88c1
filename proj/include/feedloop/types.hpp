#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace feedloop {

enum class Modality { text, vision_text };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& name);  // throws ConfigError

/// Descriptor for one inference endpoint. Immutable after construction and
/// safe to share across worker threads.
struct ModelEndpoint {
  std::string id;
  std::string base_url;  // http(s)://... or mock:<fixture-path>
  std::string model_name;
  std::string auth_ref;  // environment variable holding the credential
  Modality modality = Modality::text;

  bool is_mock() const { return base_url.rfind("mock:", 0) == 0; }
  std::string mock_fixture_path() const { return base_url.substr(5); }
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 0.9;
  int max_tokens = 512;
  long long seed = 0;
};

/// True when the non-seed decoding fields match exactly.
bool same_decoding(const SamplingParams& a, const SamplingParams& b);

struct TokenLogprob {
  std::string token_text;
  double logprob = 0.0;
};

struct NextTokenDistribution {
  std::vector<std::pair<std::string, double>> entries;
  int top_k = 0;
};

struct Instruction {
  std::string id;
  std::string prompt;
  std::optional<std::string> image;  // file path or URL
  std::string source_tag;
};

struct CandidateResponse {
  std::string response_id;
  std::string text;
  SamplingParams params;
  std::string generated_by;  // endpoint id
};

struct CandidateSet {
  std::string instruction_id;
  std::vector<CandidateResponse> candidates;
  SamplingParams params_template;  // seed field ignored
};

/// Throws PreconditionError unless all candidates share one decoding-parameter
/// tuple and carry pairwise distinct seeds.
void assert_deconfounded(const CandidateSet& set);

void to_json(nlohmann::json& j, const ModelEndpoint& e);
void from_json(const nlohmann::json& j, ModelEndpoint& e);
void to_json(nlohmann::json& j, const SamplingParams& p);
void from_json(const nlohmann::json& j, SamplingParams& p);
void to_json(nlohmann::json& j, const Instruction& ins);
void from_json(const nlohmann::json& j, Instruction& ins);
void to_json(nlohmann::json& j, const CandidateResponse& c);
void from_json(const nlohmann::json& j, CandidateResponse& c);
void to_json(nlohmann::json& j, const CandidateSet& s);
void from_json(const nlohmann::json& j, CandidateSet& s);

}  // namespace feedloop
