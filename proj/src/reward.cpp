#include "feedloop/reward.hpp"

#include <limits>

#include "feedloop/errors.hpp"
#include "feedloop/log.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

double selector_value(const RewardScore& r, Selector s) {
  if (!r.scored) return -std::numeric_limits<double>::infinity();
  return s == Selector::naive ? r.naive : r.normalized;
}

BonResult select_best(std::vector<RewardScore> rewards, Selector selector) {
  BonResult out;
  out.n = static_cast<int>(rewards.size());
  out.rewards = std::move(rewards);
  bool any = false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.rewards.size(); ++i) {
    if (!out.rewards[i].scored) continue;
    const double v = selector_value(out.rewards[i], selector);
    if (!any || v > best) {  // strict: ties keep the lowest index
      any = true;
      best = v;
      out.chosen_index = static_cast<int>(i);
    }
  }
  if (!any) throw BonFailure("every candidate failed scoring");
  return out;
}

}  // namespace

std::string to_string(Selector s) {
  switch (s) {
    case Selector::normalized:
      return "normalized";
    case Selector::naive:
      return "naive";
    case Selector::ppl:
      return "ppl";
  }
  return "normalized";
}

Selector selector_from_string(const std::string& name) {
  if (name == "normalized") return Selector::normalized;
  if (name == "naive") return Selector::naive;
  if (name == "ppl") return Selector::ppl;
  throw ConfigError("unknown selector \"" + name + "\" (allowed: normalized, naive, ppl)");
}

RewardScore naive_reward(Backend& policy, Backend& reference, const Instruction& instruction,
                         const std::string& response_text, double beta,
                         const std::string& response_id) {
  const auto lp_policy = policy.score_continuation(instruction, response_text);
  const auto lp_reference = reference.score_continuation(instruction, response_text);
  if (lp_policy.size() != lp_reference.size()) {
    throw TokenizationMismatch("policy tokenized into " + std::to_string(lp_policy.size()) +
                               " tokens, reference into " + std::to_string(lp_reference.size()));
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < lp_policy.size(); ++t) {
    if (lp_policy[t].token_text != lp_reference[t].token_text) {
      throw TokenizationMismatch("token " + std::to_string(t) + " differs: \"" +
                                 lp_policy[t].token_text + "\" vs \"" +
                                 lp_reference[t].token_text + "\"");
    }
    sum += lp_policy[t].logprob - lp_reference[t].logprob;
  }

  RewardScore out;
  out.response_id = response_id;
  out.token_count = static_cast<int>(lp_policy.size());
  out.beta = beta;
  out.naive = beta * sum;
  out.normalized = out.naive / static_cast<double>(out.token_count);
  return out;
}

BonResult best_of_n(Backend& policy, Backend& reference, const Instruction& instruction,
                    const std::vector<std::string>& candidates, double beta, Selector selector,
                    int max_workers) {
  if (candidates.empty()) throw PreconditionError("best_of_n needs at least one candidate");
  if (selector == Selector::ppl) {
    throw PreconditionError("selector ppl is served by ppl_baseline, not best_of_n");
  }
  std::vector<std::size_t> indices(candidates.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  auto outcomes = util::parallel_map_outcomes(indices, max_workers, [&](std::size_t i) {
    return naive_reward(policy, reference, instruction, candidates[i], beta,
                        instruction.id + "/c" + std::to_string(i));
  });
  std::vector<RewardScore> rewards(candidates.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].ok()) {
      rewards[i] = *outcomes[i].value;
    } else {
      rewards[i].response_id = instruction.id + "/c" + std::to_string(i);
      rewards[i].beta = beta;
      rewards[i].scored = false;
      rewards[i].failure = outcomes[i].error_code;
      rewards[i].naive = -std::numeric_limits<double>::infinity();
      rewards[i].normalized = -std::numeric_limits<double>::infinity();
      log::warn("candidate " + std::to_string(i) + " of " + instruction.id +
                " failed scoring: " + outcomes[i].error_message);
    }
  }
  return select_best(std::move(rewards), selector);
}

BonResult ppl_baseline(Backend& endpoint, const Instruction& instruction,
                       const std::vector<std::string>& candidates, int max_workers) {
  if (candidates.empty()) throw PreconditionError("ppl_baseline needs at least one candidate");
  std::vector<std::size_t> indices(candidates.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  auto outcomes = util::parallel_map_outcomes(indices, max_workers, [&](std::size_t i) {
    const auto lp = endpoint.score_continuation(instruction, candidates[i]);
    RewardScore r;
    r.response_id = instruction.id + "/c" + std::to_string(i);
    r.token_count = static_cast<int>(lp.size());
    r.beta = 1.0;
    double sum = 0.0;
    for (const auto& t : lp) sum += t.logprob;
    r.naive = sum;
    r.normalized = sum / static_cast<double>(lp.size());
    return r;
  });
  std::vector<RewardScore> rewards(candidates.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].ok()) {
      rewards[i] = *outcomes[i].value;
    } else {
      rewards[i].response_id = instruction.id + "/c" + std::to_string(i);
      rewards[i].beta = 1.0;
      rewards[i].scored = false;
      rewards[i].failure = outcomes[i].error_code;
      rewards[i].naive = -std::numeric_limits<double>::infinity();
      rewards[i].normalized = -std::numeric_limits<double>::infinity();
      log::warn("candidate " + std::to_string(i) + " of " + instruction.id +
                " failed ppl scoring: " + outcomes[i].error_message);
    }
  }
  return select_best(std::move(rewards), Selector::normalized);
}

double length_bias_report(const std::vector<std::string>& selected, double sampled_mean_len) {
  if (selected.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : selected) sum += static_cast<double>(util::word_count(s));
  return sum / static_cast<double>(selected.size()) - sampled_mean_len;
}

void to_json(nlohmann::json& j, const RewardScore& r) {
  j = nlohmann::json{{"response_id", r.response_id},
                     {"token_count", r.token_count},
                     {"beta", r.beta},
                     {"scored", r.scored}};
  // -inf is not representable in JSON; failed scores serialize as null
  if (r.scored) {
    j["naive"] = r.naive;
    j["normalized"] = r.normalized;
  } else {
    j["naive"] = nullptr;
    j["normalized"] = nullptr;
    j["failure"] = r.failure;
  }
}

void from_json(const nlohmann::json& j, RewardScore& r) {
  r.response_id = j.at("response_id").get<std::string>();
  r.token_count = j.at("token_count").get<int>();
  r.beta = j.at("beta").get<double>();
  r.scored = j.value("scored", true);
  if (r.scored) {
    r.naive = j.at("naive").get<double>();
    r.normalized = j.at("normalized").get<double>();
  } else {
    r.naive = -std::numeric_limits<double>::infinity();
    r.normalized = -std::numeric_limits<double>::infinity();
    r.failure = j.value("failure", "");
  }
}

}  // namespace feedloop
