#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feedloop/backend.hpp"
#include "feedloop/types.hpp"

namespace feedloop {

struct JudgeCase {
  std::string case_id;
  std::string reference_description;  // stands in for the image
  std::string instruction;
  std::string response_a;  // the model under evaluation
  std::string response_b;  // the competitor
  std::string category;    // free-form reporting tag
};

enum class JudgeOutcome { A, B, tie };

std::string to_string(JudgeOutcome o);

struct Verdict {
  std::string case_id;
  JudgeOutcome trust_outcome = JudgeOutcome::tie;
  JudgeOutcome overall_outcome = JudgeOutcome::tie;
  std::string raw_review;        // judge reply, verbatim, for audit
  bool presented_swapped = false;  // true: response_b was shown as Response 1
  bool valid = true;             // false: review unparseable, excluded from rates
  std::string error;
};

struct DimensionCounts {
  long long wins = 0;
  long long losses = 0;
  long long ties = 0;

  long long total() const { return wins + losses + ties; }
  /// (wins + 0.5 * ties) / total; 0 when empty.
  double rate() const;
};

struct WinRateReport {
  std::map<std::string, DimensionCounts> trust_by_category;
  std::map<std::string, DimensionCounts> overall_by_category;
  DimensionCounts trust;
  DimensionCounts overall;
  long long invalid_count = 0;
};

struct JudgeOptions {
  bool randomize_order = true;  // per-case A/B presentation swap
  std::uint64_t seed = 0;       // drives the swap decision, recorded in reports
  int max_workers = 4;
};

/**
 * Runs one comparison: fills the template (presentation order decided by
 * hash(seed, case_id) when randomization is on), queries the judge, parses
 * the "Trustworthiness:"/"Overall:" verdict lines, and maps 1/2 back to the
 * stable A/B identities. An unparseable review returns valid=false instead of
 * throwing; backend errors propagate.
 */
Verdict judge_case(Backend& judge, const JudgeCase& judge_case_input,
                   const std::string& prompt_template, const JudgeOptions& options);

std::vector<Verdict> judge_cases(Backend& judge, const std::vector<JudgeCase>& cases,
                                 const std::string& prompt_template, const JudgeOptions& options);

/// Aggregates valid verdicts into per-category and overall win rates, each
/// rate = (wins + 0.5 * ties) / total from response_a's perspective.
WinRateReport win_rates(const std::vector<Verdict>& verdicts,
                        const std::map<std::string, std::string>& categories);

std::string render_report_table(const WinRateReport& report);

nlohmann::json report_to_json(const WinRateReport& report);

void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);
void to_json(nlohmann::json& j, const JudgeCase& c);
void from_json(const nlohmann::json& j, JudgeCase& c);

std::vector<JudgeCase> read_judge_cases(const std::string& path);
void write_verdicts(const std::string& path, const std::vector<Verdict>& verdicts);
std::vector<Verdict> read_verdicts(const std::string& path);

inline const char* kJudgeCasesSchema = "judge_cases.v1";
inline const char* kVerdictsSchema = "verdicts.v1";

}  // namespace feedloop
