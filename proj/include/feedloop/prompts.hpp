#pragma once

#include <string>
#include <vector>

namespace feedloop::prompts {

/// Directory holding the shipped prompt templates: $FEEDLOOP_ASSETS when set,
/// otherwise the build-time default (the repository's assets/ tree).
std::string asset_dir();

/// Loads assets/prompts/<name> from asset_dir().
std::string load_template(const std::string& name);

constexpr const char* kSplitClaims = "split_claims.txt";
constexpr const char* kConvertQuestions = "convert_questions.txt";
constexpr const char* kSelfRewardHallucination = "self_reward_hallucination.txt";
constexpr const char* kSelfRewardHelpfulness = "self_reward_helpfulness.txt";
constexpr const char* kJudgePairwise = "judge_pairwise.txt";

std::string build_split_prompt(const std::string& tmpl, const std::string& question,
                               const std::string& answer);

/// Replaces the exemplar bullet list under "### Declarative sentences:" with
/// the actual claims, one bullet per claim.
std::string build_convert_prompt(const std::string& tmpl, const std::vector<std::string>& claims);

std::string build_self_reward_prompt(const std::string& tmpl, const std::string& question,
                                     const std::string& answer);

std::string build_judge_prompt(const std::string& tmpl, const std::string& description,
                               const std::string& instruction, const std::string& response_1,
                               const std::string& response_2);

}  // namespace feedloop::prompts
