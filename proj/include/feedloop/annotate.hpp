#pragma once

#include <string>
#include <vector>

#include "feedloop/backend.hpp"
#include "feedloop/types.hpp"

namespace feedloop {

struct Claim {
  std::string response_id;
  int index = 0;  // contiguous from 0 within a response
  std::string text;
};

struct PolarQuestion {
  int claim_index = 0;
  std::string text;  // always ends with "?"
};

struct ClaimScore {
  int claim_index = 0;
  double p_yes = 0.0;
  double p_no = 0.0;

  /// Strict inequality: a tie is not a rejection.
  bool rejected() const { return p_no > p_yes; }
};

enum class Strategy { REJ_N, REJ_P, SELF_REWARD };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);  // throws ConfigError

enum class SelfRewardDimension { hallucination, helpfulness };

struct ResponseScore {
  std::string response_id;
  int m = 0;      // claim count (0 for SELF_REWARD)
  int n_rej = 0;  // claims with p_no > p_yes
  double score = 0.0;
  Strategy strategy = Strategy::REJ_N;
  bool zero_claims = false;  // lets pairing exclude claim-free responses
};

// ---------------------------------------------------------------------------
// reply parsers, exposed for direct testing

/// Extracts the bullets of the "### Facts:" block. Throws ParseError when the
/// block is missing or holds zero bullets.
std::vector<std::string> parse_facts_block(const std::string& reply);

/// Extracts the bullets of the "### Modified sentences:" block; every bullet
/// must end with "?". Throws ParseError otherwise.
std::vector<std::string> parse_modified_sentences(const std::string& reply);

/// The score is the last nonempty line of the reply, which must be a single
/// digit 0-3. Throws ParseError otherwise.
int parse_self_reward_score(const std::string& reply);

// ---------------------------------------------------------------------------
// pipeline steps

std::vector<Claim> split_claims(Backend& text_backend, const std::string& split_template,
                                const std::string& question, const std::string& answer,
                                const std::string& response_id);

/// One conversion request covering all claims; the reply must hold exactly
/// one question per claim, in claim order (CountMismatch otherwise).
std::vector<PolarQuestion> convert_to_questions(Backend& text_backend,
                                                const std::string& convert_template,
                                                const std::vector<Claim>& claims);

/// p_yes sums the probability of entries whose token, after stripping leading
/// whitespace, is exactly "Yes" or "yes"; p_no likewise for "No"/"no". All
/// other mass is ignored; nothing is renormalized. Zero mass on all four
/// tokens yields (0,0) and a logged warning.
ClaimScore score_claim(Backend& labeler, const Instruction& instruction,
                       const PolarQuestion& question, bool prepend_instruction);

ResponseScore combine_rej_n(const std::string& response_id,
                            const std::vector<ClaimScore>& claim_scores);
ResponseScore combine_rej_p(const std::string& response_id,
                            const std::vector<ClaimScore>& claim_scores);

ResponseScore score_self_reward(Backend& labeler, const std::string& reward_template,
                                const Instruction& instruction, const std::string& answer,
                                const std::string& response_id);

// ---------------------------------------------------------------------------
// per-set fan-out

struct UnscorableRecord {
  std::string response_id;
  std::string error_code;
  std::string message;
};

struct AnnotatedSet {
  std::string instruction_id;
  std::vector<ResponseScore> scores;  // scorable candidates, input order
  std::vector<UnscorableRecord> unscorable;
};

struct AnnotateOptions {
  Strategy strategy = Strategy::REJ_N;
  bool prepend_instruction = false;
  std::string split_template;
  std::string convert_template;
  std::string self_reward_template;  // used only for SELF_REWARD
  int max_workers = 4;
};

/// Scores every candidate of the set. Candidates whose split/convert/score
/// pipeline fails become unscorable records instead of aborting the set.
AnnotatedSet annotate_set(Backend& labeler, Backend& text_backend,
                          const Instruction& instruction, const CandidateSet& set,
                          const AnnotateOptions& options);

void to_json(nlohmann::json& j, const ResponseScore& s);
void from_json(const nlohmann::json& j, ResponseScore& s);
void to_json(nlohmann::json& j, const AnnotatedSet& s);
void from_json(const nlohmann::json& j, AnnotatedSet& s);

void write_annotated_sets(const std::string& path, const std::vector<AnnotatedSet>& sets);
std::vector<AnnotatedSet> read_annotated_sets(const std::string& path);

inline const char* kResponseScoresSchema = "response_scores.v1";

}  // namespace feedloop
