#include "feedloop/judge.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <optional>
#include <sstream>

#include "feedloop/errors.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/prompts.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

SamplingParams judge_params() {
  SamplingParams p;
  p.temperature = 0.0;
  p.top_p = 1.0;
  p.max_tokens = 1024;
  p.seed = 0;
  return p;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Presented-order verdict: 1, 2, or tie.
enum class Presented { first, second, tie };

std::optional<Presented> parse_marker_line(const std::string& line, const std::string& marker) {
  const std::string l = lower(util::trim(line));
  if (l.rfind(marker, 0) != 0) return std::nullopt;
  const std::string value = util::trim(l.substr(marker.size()));
  if (value == "1") return Presented::first;
  if (value == "2") return Presented::second;
  if (value == "tie") return Presented::tie;
  return std::nullopt;
}

JudgeOutcome derandomize(Presented p, bool swapped) {
  switch (p) {
    case Presented::tie:
      return JudgeOutcome::tie;
    case Presented::first:
      return swapped ? JudgeOutcome::B : JudgeOutcome::A;
    case Presented::second:
      return swapped ? JudgeOutcome::A : JudgeOutcome::B;
  }
  return JudgeOutcome::tie;
}

JudgeOutcome outcome_from_string(const std::string& s) {
  if (s == "A") return JudgeOutcome::A;
  if (s == "B") return JudgeOutcome::B;
  if (s == "tie") return JudgeOutcome::tie;
  throw SchemaError("unknown judge outcome \"" + s + "\"");
}

void tally(DimensionCounts& counts, JudgeOutcome outcome) {
  switch (outcome) {
    case JudgeOutcome::A:
      ++counts.wins;
      break;
    case JudgeOutcome::B:
      ++counts.losses;
      break;
    case JudgeOutcome::tie:
      ++counts.ties;
      break;
  }
}

}  // namespace

std::string to_string(JudgeOutcome o) {
  switch (o) {
    case JudgeOutcome::A:
      return "A";
    case JudgeOutcome::B:
      return "B";
    case JudgeOutcome::tie:
      return "tie";
  }
  return "tie";
}

double DimensionCounts::rate() const {
  const long long n = total();
  if (n == 0) return 0.0;
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(n);
}

Verdict judge_case(Backend& judge, const JudgeCase& judge_case_input,
                   const std::string& prompt_template, const JudgeOptions& options) {
  const JudgeCase& c = judge_case_input;
  if (judge.endpoint().modality != Modality::text) {
    throw PreconditionError("the judge must be a text endpoint; it sees a description, not the image");
  }
  if (c.reference_description.empty()) {
    throw PreconditionError("case " + c.case_id + " has an empty reference description");
  }
  if (c.response_a.empty() || c.response_b.empty()) {
    throw PreconditionError("case " + c.case_id + " has an empty response");
  }

  const bool swapped =
      options.randomize_order &&
      (util::fnv1a64(c.case_id, util::fnv1a64(std::to_string(options.seed))) % 2 == 1);
  const std::string& first = swapped ? c.response_b : c.response_a;
  const std::string& second = swapped ? c.response_a : c.response_b;
  const std::string prompt =
      prompts::build_judge_prompt(prompt_template, c.reference_description, c.instruction, first,
                                  second);

  Instruction req;
  req.id = c.case_id;
  req.prompt = prompt;
  const CandidateResponse reply = judge.sample(req, judge_params());

  Verdict v;
  v.case_id = c.case_id;
  v.raw_review = reply.text;
  v.presented_swapped = swapped;

  // Last occurrence wins: replies sometimes restate the requested format
  // before the actual verdict lines.
  std::optional<Presented> trust;
  std::optional<Presented> overall;
  for (const auto& line : util::split_lines(reply.text)) {
    if (auto p = parse_marker_line(line, "trustworthiness:")) trust = p;
    if (auto p = parse_marker_line(line, "overall:")) overall = p;
  }
  if (!trust || !overall) {
    v.valid = false;
    v.error = "parse_error";
    return v;
  }
  v.trust_outcome = derandomize(*trust, swapped);
  v.overall_outcome = derandomize(*overall, swapped);
  return v;
}

std::vector<Verdict> judge_cases(Backend& judge, const std::vector<JudgeCase>& cases,
                                 const std::string& prompt_template, const JudgeOptions& options) {
  return util::parallel_map(cases, options.max_workers, [&](const JudgeCase& c) {
    return judge_case(judge, c, prompt_template, options);
  });
}

WinRateReport win_rates(const std::vector<Verdict>& verdicts,
                        const std::map<std::string, std::string>& categories) {
  WinRateReport report;
  for (const auto& v : verdicts) {
    if (!v.valid) {
      ++report.invalid_count;
      continue;
    }
    auto it = categories.find(v.case_id);
    const std::string category = it == categories.end() ? "uncategorized" : it->second;
    tally(report.trust, v.trust_outcome);
    tally(report.overall, v.overall_outcome);
    tally(report.trust_by_category[category], v.trust_outcome);
    tally(report.overall_by_category[category], v.overall_outcome);
  }
  return report;
}

std::string render_report_table(const WinRateReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << std::left << std::setw(24) << "category" << std::right << std::setw(8) << "cases"
      << std::setw(10) << "trust" << std::setw(10) << "overall" << '\n';
  auto row = [&](const std::string& name, const DimensionCounts& trust,
                 const DimensionCounts& overall) {
    out << std::left << std::setw(24) << name << std::right << std::setw(8) << trust.total()
        << std::setw(10) << trust.rate() * 100.0 << std::setw(10) << overall.rate() * 100.0
        << '\n';
  };
  for (const auto& [category, trust] : report.trust_by_category) {
    row(category, trust, report.overall_by_category.at(category));
  }
  row("all", report.trust, report.overall);
  if (report.invalid_count > 0) {
    out << "invalid (excluded): " << report.invalid_count << '\n';
  }
  return out.str();
}

nlohmann::json report_to_json(const WinRateReport& report) {
  auto counts_json = [](const DimensionCounts& c) {
    return nlohmann::json{
        {"wins", c.wins}, {"losses", c.losses}, {"ties", c.ties}, {"rate", c.rate()}};
  };
  nlohmann::json per_category = nlohmann::json::object();
  for (const auto& [category, trust] : report.trust_by_category) {
    per_category[category] = nlohmann::json{
        {"trust", counts_json(trust)},
        {"overall", counts_json(report.overall_by_category.at(category))}};
  }
  return nlohmann::json{{"aggregate",
                         nlohmann::json{{"trust", counts_json(report.trust)},
                                        {"overall", counts_json(report.overall)}}},
                        {"per_category", per_category},
                        {"invalid_count", report.invalid_count}};
}

void to_json(nlohmann::json& j, const Verdict& v) {
  j = nlohmann::json{{"case_id", v.case_id},
                     {"trust_outcome", to_string(v.trust_outcome)},
                     {"overall_outcome", to_string(v.overall_outcome)},
                     {"raw_review", v.raw_review},
                     {"presented_swapped", v.presented_swapped},
                     {"valid", v.valid}};
  if (!v.valid) j["error"] = v.error;
}

void from_json(const nlohmann::json& j, Verdict& v) {
  v.case_id = j.at("case_id").get<std::string>();
  v.trust_outcome = outcome_from_string(j.at("trust_outcome").get<std::string>());
  v.overall_outcome = outcome_from_string(j.at("overall_outcome").get<std::string>());
  v.raw_review = j.at("raw_review").get<std::string>();
  v.presented_swapped = j.value("presented_swapped", false);
  v.valid = j.value("valid", true);
  v.error = j.value("error", "");
}

void to_json(nlohmann::json& j, const JudgeCase& c) {
  j = nlohmann::json{{"case_id", c.case_id},
                     {"reference_description", c.reference_description},
                     {"instruction", c.instruction},
                     {"response_a", c.response_a},
                     {"response_b", c.response_b},
                     {"category", c.category}};
}

void from_json(const nlohmann::json& j, JudgeCase& c) {
  c.case_id = j.at("case_id").get<std::string>();
  c.reference_description = j.at("reference_description").get<std::string>();
  c.instruction = j.at("instruction").get<std::string>();
  c.response_a = j.at("response_a").get<std::string>();
  c.response_b = j.at("response_b").get<std::string>();
  c.category = j.value("category", "");
}

std::vector<JudgeCase> read_judge_cases(const std::string& path) {
  auto records = jsonl::read_records_checked(path, kJudgeCasesSchema);
  std::vector<JudgeCase> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(rec.get<JudgeCase>());
  return out;
}

void write_verdicts(const std::string& path, const std::vector<Verdict>& verdicts) {
  std::vector<nlohmann::json> records;
  records.reserve(verdicts.size());
  for (const auto& v : verdicts) records.emplace_back(v);
  jsonl::write_records_atomic(path, records, kVerdictsSchema);
}

std::vector<Verdict> read_verdicts(const std::string& path) {
  auto records = jsonl::read_records_checked(path, kVerdictsSchema);
  std::vector<Verdict> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(rec.get<Verdict>());
  return out;
}

}  // namespace feedloop
