#include "feedloop/annotate.hpp"

#include <cctype>

#include "feedloop/errors.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/log.hpp"
#include "feedloop/prompts.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

/// Deterministic decoding for every annotation-side request.
SamplingParams annotation_params() {
  SamplingParams p;
  p.temperature = 0.0;
  p.top_p = 1.0;
  p.max_tokens = 1024;
  p.seed = 0;
  return p;
}

std::vector<std::string> parse_bullet_block(const std::string& reply, const std::string& header) {
  const std::size_t pos = reply.find(header);
  if (pos == std::string::npos) {
    throw ParseError("reply lacks the \"" + header + "\" block");
  }
  std::vector<std::string> bullets;
  bool block_ended = false;
  for (const auto& line : util::split_lines(reply.substr(pos + header.size()))) {
    const std::string t = util::trim(line);
    if (t.empty()) continue;
    if (t.rfind("- ", 0) == 0) {
      if (block_ended) break;  // a second bullet list after other text is not ours
      bullets.push_back(util::trim(t.substr(2)));
    } else if (t == "-") {
      continue;  // stray empty bullet
    } else {
      if (!bullets.empty()) block_ended = true;
    }
  }
  if (bullets.empty()) {
    throw ParseError("\"" + header + "\" block holds no bullets");
  }
  return bullets;
}

std::string_view strip_leading_ws(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

Instruction text_only_request(const std::string& prompt) {
  Instruction req;
  req.id = "annotation";
  req.prompt = prompt;
  return req;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::REJ_N:
      return "REJ_N";
    case Strategy::REJ_P:
      return "REJ_P";
    case Strategy::SELF_REWARD:
      return "SELF_REWARD";
  }
  return "REJ_N";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "REJ_N") return Strategy::REJ_N;
  if (name == "REJ_P") return Strategy::REJ_P;
  if (name == "SELF_REWARD") return Strategy::SELF_REWARD;
  throw ConfigError("unknown strategy \"" + name + "\" (allowed: REJ_N, REJ_P, SELF_REWARD)");
}

std::vector<std::string> parse_facts_block(const std::string& reply) {
  return parse_bullet_block(reply, "### Facts:");
}

std::vector<std::string> parse_modified_sentences(const std::string& reply) {
  auto bullets = parse_bullet_block(reply, "### Modified sentences:");
  for (const auto& b : bullets) {
    if (b.empty() || b.back() != '?') {
      throw ParseError("converted sentence is not a question: \"" + b + "\"");
    }
  }
  return bullets;
}

int parse_self_reward_score(const std::string& reply) {
  const auto lines = util::split_lines(reply);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::string t = util::trim(*it);
    if (t.empty()) continue;
    if (t.size() == 1 && t[0] >= '0' && t[0] <= '3') return t[0] - '0';
    throw ParseError("final line is not a single digit 0-3: \"" + t + "\"");
  }
  throw ParseError("reply is empty");
}

std::vector<Claim> split_claims(Backend& text_backend, const std::string& split_template,
                                const std::string& question, const std::string& answer,
                                const std::string& response_id) {
  if (answer.empty()) throw PreconditionError("cannot split an empty answer");
  const std::string prompt = prompts::build_split_prompt(split_template, question, answer);
  const CandidateResponse reply = text_backend.sample(text_only_request(prompt), annotation_params());
  const auto bullets = parse_facts_block(reply.text);
  std::vector<Claim> claims;
  claims.reserve(bullets.size());
  int index = 0;
  for (const auto& b : bullets) {
    claims.push_back(Claim{response_id, index++, b});
  }
  return claims;
}

std::vector<PolarQuestion> convert_to_questions(Backend& text_backend,
                                                const std::string& convert_template,
                                                const std::vector<Claim>& claims) {
  if (claims.empty()) throw PreconditionError("no claims to convert");
  std::vector<std::string> texts;
  texts.reserve(claims.size());
  for (const auto& c : claims) texts.push_back(c.text);
  const std::string prompt = prompts::build_convert_prompt(convert_template, texts);
  const CandidateResponse reply = text_backend.sample(text_only_request(prompt), annotation_params());
  const auto bullets = parse_modified_sentences(reply.text);
  if (bullets.size() != claims.size()) {
    throw CountMismatch("got " + std::to_string(bullets.size()) + " questions for " +
                        std::to_string(claims.size()) + " claims");
  }
  std::vector<PolarQuestion> questions;
  questions.reserve(bullets.size());
  for (std::size_t i = 0; i < bullets.size(); ++i) {
    questions.push_back(PolarQuestion{claims[i].index, bullets[i]});
  }
  return questions;
}

ClaimScore score_claim(Backend& labeler, const Instruction& instruction,
                       const PolarQuestion& question, bool prepend_instruction) {
  std::string prompt = question.text;
  if (prepend_instruction) prompt = instruction.prompt + "\n" + prompt;
  const NextTokenDistribution dist = labeler.next_token_distribution(prompt, instruction.image);

  ClaimScore score;
  score.claim_index = question.claim_index;
  for (const auto& [token, p] : dist.entries) {
    const std::string_view bare = strip_leading_ws(token);
    if (bare == "Yes" || bare == "yes") {
      score.p_yes += p;
    } else if (bare == "No" || bare == "no") {
      score.p_no += p;
    }
  }
  if (score.p_yes == 0.0 && score.p_no == 0.0) {
    log::warn("no yes/no mass for claim " + std::to_string(question.claim_index) + " of " +
              instruction.id + "; scoring (0,0)");
  }
  return score;
}

ResponseScore combine_rej_n(const std::string& response_id,
                            const std::vector<ClaimScore>& claim_scores) {
  ResponseScore out;
  out.response_id = response_id;
  out.strategy = Strategy::REJ_N;
  out.m = static_cast<int>(claim_scores.size());
  for (const auto& cs : claim_scores) {
    if (cs.rejected()) ++out.n_rej;
  }
  out.score = -static_cast<double>(out.n_rej);
  out.zero_claims = out.m == 0;
  return out;
}

ResponseScore combine_rej_p(const std::string& response_id,
                            const std::vector<ClaimScore>& claim_scores) {
  ResponseScore out = combine_rej_n(response_id, claim_scores);
  out.strategy = Strategy::REJ_P;
  out.score = out.m == 0 ? 0.0 : -static_cast<double>(out.n_rej) / static_cast<double>(out.m);
  return out;
}

ResponseScore score_self_reward(Backend& labeler, const std::string& reward_template,
                                const Instruction& instruction, const std::string& answer,
                                const std::string& response_id) {
  const std::string prompt =
      prompts::build_self_reward_prompt(reward_template, instruction.prompt, answer);
  Instruction req;
  req.id = instruction.id;
  req.prompt = prompt;
  req.image = instruction.image;
  const CandidateResponse reply = labeler.sample(req, annotation_params());
  ResponseScore out;
  out.response_id = response_id;
  out.strategy = Strategy::SELF_REWARD;
  out.score = parse_self_reward_score(reply.text);
  return out;
}

AnnotatedSet annotate_set(Backend& labeler, Backend& text_backend,
                          const Instruction& instruction, const CandidateSet& set,
                          const AnnotateOptions& options) {
  auto score_one = [&](const CandidateResponse& candidate) -> ResponseScore {
    if (options.strategy == Strategy::SELF_REWARD) {
      return score_self_reward(labeler, options.self_reward_template, instruction, candidate.text,
                               candidate.response_id);
    }
    const auto claims = split_claims(text_backend, options.split_template, instruction.prompt,
                                     candidate.text, candidate.response_id);
    const auto questions = convert_to_questions(text_backend, options.convert_template, claims);
    std::vector<ClaimScore> claim_scores;
    claim_scores.reserve(questions.size());
    for (const auto& q : questions) {
      claim_scores.push_back(score_claim(labeler, instruction, q, options.prepend_instruction));
    }
    return options.strategy == Strategy::REJ_N
               ? combine_rej_n(candidate.response_id, claim_scores)
               : combine_rej_p(candidate.response_id, claim_scores);
  };

  const auto outcomes = util::parallel_map_outcomes(set.candidates, options.max_workers, score_one);

  AnnotatedSet out;
  out.instruction_id = set.instruction_id;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].ok()) {
      out.scores.push_back(*outcomes[i].value);
    } else {
      out.unscorable.push_back(UnscorableRecord{set.candidates[i].response_id,
                                                outcomes[i].error_code,
                                                outcomes[i].error_message});
      log::warn("candidate " + set.candidates[i].response_id + " unscorable: " +
                outcomes[i].error_message);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const ResponseScore& s) {
  j = nlohmann::json{{"response_id", s.response_id}, {"m", s.m},
                     {"n_rej", s.n_rej},             {"score", s.score},
                     {"strategy", to_string(s.strategy)}, {"zero_claims", s.zero_claims}};
}

void from_json(const nlohmann::json& j, ResponseScore& s) {
  s.response_id = j.at("response_id").get<std::string>();
  s.m = j.at("m").get<int>();
  s.n_rej = j.at("n_rej").get<int>();
  s.score = j.at("score").get<double>();
  s.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  s.zero_claims = j.value("zero_claims", false);
}

void to_json(nlohmann::json& j, const AnnotatedSet& s) {
  j = nlohmann::json{{"instruction_id", s.instruction_id}, {"scores", s.scores}};
  auto& un = j["unscorable"] = nlohmann::json::array();
  for (const auto& u : s.unscorable) {
    un.push_back(nlohmann::json{
        {"response_id", u.response_id}, {"error", u.error_code}, {"message", u.message}});
  }
}

void from_json(const nlohmann::json& j, AnnotatedSet& s) {
  s.instruction_id = j.at("instruction_id").get<std::string>();
  s.scores = j.at("scores").get<std::vector<ResponseScore>>();
  s.unscorable.clear();
  for (const auto& u : j.value("unscorable", nlohmann::json::array())) {
    s.unscorable.push_back(UnscorableRecord{u.value("response_id", ""), u.value("error", ""),
                                            u.value("message", "")});
  }
}

void write_annotated_sets(const std::string& path, const std::vector<AnnotatedSet>& sets) {
  std::vector<nlohmann::json> records;
  records.reserve(sets.size());
  for (const auto& s : sets) records.emplace_back(s);
  jsonl::write_records_atomic(path, records, kResponseScoresSchema);
}

std::vector<AnnotatedSet> read_annotated_sets(const std::string& path) {
  auto records = jsonl::read_records_checked(path, kResponseScoresSchema);
  std::vector<AnnotatedSet> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(rec.get<AnnotatedSet>());
  return out;
}

}  // namespace feedloop
