#include "feedloop/pairs.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "feedloop/errors.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

double mean_diff(const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) sum += static_cast<double>(p.len_diff());
  return sum / static_cast<double>(pairs.size());
}

}  // namespace

std::uint64_t derive_pair_seed(std::uint64_t base_seed, const std::string& instruction_id) {
  return base_seed ^ util::fnv1a64(instruction_id);
}

std::vector<PreferencePair> build_pairs(const std::string& instruction_id,
                                        const std::vector<ScoredResponse>& scored,
                                        std::uint64_t rng_seed, const PairOptions& options) {
  std::vector<PreferencePair> all;
  for (const auto& w : scored) {
    for (const auto& l : scored) {
      if (!(w.score > l.score)) continue;
      if (options.dedup_identical_texts && w.text == l.text) continue;
      PreferencePair p;
      p.instruction_id = instruction_id;
      p.winner_id = w.response_id;
      p.winner_text = w.text;
      p.loser_id = l.response_id;
      p.loser_text = l.text;
      p.winner_score = w.score;
      p.loser_score = l.score;
      p.word_len_w = static_cast<long long>(util::word_count(w.text));
      p.word_len_l = static_cast<long long>(util::word_count(l.text));
      all.push_back(std::move(p));
    }
  }
  const std::size_t cap = options.max_pairs_per_instruction < 0
                              ? 0
                              : static_cast<std::size_t>(options.max_pairs_per_instruction);
  if (all.size() <= cap) return all;
  std::vector<PreferencePair> sampled;
  sampled.reserve(cap);
  std::mt19937_64 rng(rng_seed);
  std::sample(all.begin(), all.end(), std::back_inserter(sampled), cap, rng);
  return sampled;
}

PairDataset filter_length_bias(std::vector<PreferencePair> pairs) {
  const bool was_nonempty = !pairs.empty();
  std::size_t dropped = 0;
  while (!pairs.empty() && mean_diff(pairs) <= -1.0) {
    auto worst = std::min_element(pairs.begin(), pairs.end(),
                                  [](const PreferencePair& a, const PreferencePair& b) {
                                    return a.len_diff() < b.len_diff();
                                  });
    pairs.erase(worst);
    ++dropped;
  }
  if (was_nonempty && pairs.empty()) {
    throw ExhaustedDataset("length filter dropped every pair (" + std::to_string(dropped) + ")");
  }
  PairDataset out;
  out.mean_len_diff = mean_diff(pairs);
  out.pairs = std::move(pairs);
  out.dropped_count = dropped;
  return out;
}

PairDataset merge_datasets(const std::vector<PairDataset>& datasets) {
  PairDataset out;
  std::set<std::string> claimed;  // ids owned by earlier sources
  for (const auto& ds : datasets) {
    std::set<std::string> own;
    for (const auto& p : ds.pairs) own.insert(p.instruction_id);
    for (const auto& id : own) {
      if (claimed.count(id) > 0) {
        throw IdCollision("instruction id " + id + " appears in more than one source dataset");
      }
    }
    claimed.insert(own.begin(), own.end());
    out.pairs.insert(out.pairs.end(), ds.pairs.begin(), ds.pairs.end());
    out.dropped_count += ds.dropped_count;
  }
  out.mean_len_diff = mean_diff(out.pairs);
  return out;
}

PairDataset build_pair_dataset(const std::vector<InstructionScores>& inputs,
                               std::uint64_t base_seed, const PairOptions& options,
                               bool cap_then_filter) {
  if (cap_then_filter) {
    std::vector<PreferencePair> all;
    for (const auto& in : inputs) {
      auto pairs = build_pairs(in.instruction_id, in.scored,
                               derive_pair_seed(base_seed, in.instruction_id), options);
      all.insert(all.end(), pairs.begin(), pairs.end());
    }
    if (all.empty()) return PairDataset{};
    return filter_length_bias(std::move(all));
  }

  PairOptions uncapped = options;
  uncapped.max_pairs_per_instruction = std::numeric_limits<int>::max();
  std::vector<PreferencePair> all;
  for (const auto& in : inputs) {
    auto pairs = build_pairs(in.instruction_id, in.scored, 0, uncapped);
    all.insert(all.end(), pairs.begin(), pairs.end());
  }
  if (all.empty()) return PairDataset{};
  PairDataset filtered = filter_length_bias(std::move(all));

  // Cap per instruction, preserving the input instruction order.
  std::map<std::string, std::vector<PreferencePair>> by_id;
  for (auto& p : filtered.pairs) by_id[p.instruction_id].push_back(std::move(p));
  std::vector<PreferencePair> capped;
  const std::size_t cap = static_cast<std::size_t>(options.max_pairs_per_instruction);
  for (const auto& in : inputs) {
    auto it = by_id.find(in.instruction_id);
    if (it == by_id.end()) continue;
    auto& pairs = it->second;
    if (pairs.size() <= cap) {
      capped.insert(capped.end(), pairs.begin(), pairs.end());
    } else {
      std::mt19937_64 rng(derive_pair_seed(base_seed, in.instruction_id));
      std::sample(pairs.begin(), pairs.end(), std::back_inserter(capped), cap, rng);
    }
  }
  PairDataset out = filter_length_bias(std::move(capped));
  out.dropped_count += filtered.dropped_count;
  return out;
}

void to_json(nlohmann::json& j, const PreferencePair& p) {
  j = nlohmann::json{{"instruction_id", p.instruction_id},
                     {"winner_id", p.winner_id},
                     {"winner_text", p.winner_text},
                     {"loser_id", p.loser_id},
                     {"loser_text", p.loser_text},
                     {"winner_score", p.winner_score},
                     {"loser_score", p.loser_score},
                     {"word_len_w", p.word_len_w},
                     {"word_len_l", p.word_len_l}};
}

void from_json(const nlohmann::json& j, PreferencePair& p) {
  p.instruction_id = j.at("instruction_id").get<std::string>();
  p.winner_id = j.at("winner_id").get<std::string>();
  p.winner_text = j.at("winner_text").get<std::string>();
  p.loser_id = j.at("loser_id").get<std::string>();
  p.loser_text = j.at("loser_text").get<std::string>();
  p.winner_score = j.at("winner_score").get<double>();
  p.loser_score = j.at("loser_score").get<double>();
  p.word_len_w = j.at("word_len_w").get<long long>();
  p.word_len_l = j.at("word_len_l").get<long long>();
}

void write_pairs_detail(const std::string& path, const PairDataset& dataset) {
  std::vector<nlohmann::json> records;
  records.reserve(dataset.pairs.size());
  for (const auto& p : dataset.pairs) records.emplace_back(p);
  jsonl::write_records_atomic(path, records, kPairsDetailSchema);
}

PairDataset read_pairs_detail(const std::string& path) {
  auto records = jsonl::read_records_checked(path, kPairsDetailSchema);
  PairDataset out;
  out.pairs.reserve(records.size());
  for (const auto& rec : records) out.pairs.push_back(rec.get<PreferencePair>());
  out.mean_len_diff = mean_diff(out.pairs);
  return out;
}

void write_trainer_dataset(const std::string& path, const PairDataset& dataset,
                           const std::map<std::string, Instruction>& instructions) {
  std::vector<nlohmann::json> records;
  records.reserve(dataset.pairs.size());
  for (const auto& p : dataset.pairs) {
    auto it = instructions.find(p.instruction_id);
    if (it == instructions.end()) {
      throw PreconditionError("no instruction record for id " + p.instruction_id);
    }
    nlohmann::json rec;
    rec["instruction_id"] = p.instruction_id;
    rec["prompt"] = it->second.prompt;
    rec["image"] = it->second.image ? nlohmann::json(*it->second.image) : nlohmann::json(nullptr);
    rec["chosen"] = p.winner_text;
    rec["rejected"] = p.loser_text;
    rec["winner_score"] = p.winner_score;
    rec["loser_score"] = p.loser_score;
    records.push_back(std::move(rec));
  }
  jsonl::write_records_atomic(path, records, kTrainerDatasetSchema);
}

}  // namespace feedloop
