#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feedloop/backend.hpp"
#include "feedloop/types.hpp"

namespace feedloop {

struct RewardScore {
  std::string response_id;
  int token_count = 0;      // T
  double naive = 0.0;       // beta * sum_t log-ratio
  double normalized = 0.0;  // naive / T
  double beta = 0.1;
  bool scored = true;       // false: scoring failed, candidate never wins selection
  std::string failure;      // error code when !scored
};

struct BonResult {
  int chosen_index = 0;  // argmax of the selector value, ties to lowest index
  std::vector<RewardScore> rewards;  // parallel to the candidate list
  int n = 0;
};

enum class Selector { normalized, naive, ppl };

std::string to_string(Selector s);
Selector selector_from_string(const std::string& name);  // throws ConfigError

/**
 * Implicit preference reward of a response under a (policy, reference)
 * endpoint pair: naive = beta * sum over tokens of (logp_policy -
 * logp_reference), accumulated left to right; normalized = naive / T. The two
 * endpoints must tokenize the response identically (TokenizationMismatch
 * otherwise).
 */
RewardScore naive_reward(Backend& policy, Backend& reference, const Instruction& instruction,
                         const std::string& response_text, double beta,
                         const std::string& response_id = "");

/**
 * Scores every candidate and returns the argmax of the selector value
 * (Selector::ppl is rejected here; use ppl_baseline). Candidates that fail
 * scoring are kept in the rewards list with scored=false and never win; if
 * every candidate fails, BonFailure.
 */
BonResult best_of_n(Backend& policy, Backend& reference, const Instruction& instruction,
                    const std::vector<std::string>& candidates, double beta,
                    Selector selector = Selector::normalized, int max_workers = 4);

/// Baseline: score = mean token logprob under a single endpoint (stored in
/// `normalized` with beta = 1); argmax selection with the same tie rule.
BonResult ppl_baseline(Backend& endpoint, const Instruction& instruction,
                       const std::vector<std::string>& candidates, int max_workers = 4);

/// Mean word length of the selected responses minus the sampled mean length.
/// Diagnostic only.
double length_bias_report(const std::vector<std::string>& selected, double sampled_mean_len);

void to_json(nlohmann::json& j, const RewardScore& r);
void from_json(const nlohmann::json& j, RewardScore& r);

inline const char* kBonResultsSchema = "bon_results.v1";

}  // namespace feedloop
