#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feedloop/errors.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/pairs.hpp"
#include "feedloop/util.hpp"
#include "helpers.hpp"

using namespace feedloop;
using nlohmann::json;

namespace {

ScoredResponse sr(const std::string& id, double score, const std::string& text) {
  ScoredResponse r;
  r.response_id = id;
  r.score = score;
  r.text = text;
  return r;
}

PreferencePair pair_with_lengths(long long len_w, long long len_l, const std::string& suffix) {
  PreferencePair p;
  p.instruction_id = "ins";
  p.winner_id = "w" + suffix;
  p.loser_id = "l" + suffix;
  p.winner_score = 1.0;
  p.loser_score = 0.0;
  p.word_len_w = len_w;
  p.word_len_l = len_l;
  return p;
}

std::vector<ScoredResponse> random_scored(std::mt19937_64& rng, int n) {
  std::vector<ScoredResponse> out;
  for (int i = 0; i < n; ++i) {
    // Coarse scores so ties are common.
    const double score = -static_cast<double>(rng() % 4);
    std::string text;
    const int words = 1 + static_cast<int>(rng() % 6);
    for (int w = 0; w < words; ++w) text += (w ? " word" : "word");
    out.push_back(sr("r" + std::to_string(i), score, text));
  }
  return out;
}

/// The full ordered-pair enumeration, kept independent of the library's loop.
std::vector<std::pair<std::string, std::string>> brute_force_pairs(
    const std::vector<ScoredResponse>& scored) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& w : scored) {
    for (const auto& l : scored) {
      if (w.score > l.score) out.emplace_back(w.response_id, l.response_id);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("build_pairs enumerates exactly the strictly-better ordered pairs") {
  std::mt19937_64 rng(11);
  PairOptions uncapped;
  uncapped.max_pairs_per_instruction = 10000;
  for (int trial = 0; trial < 300; ++trial) {
    const auto scored = random_scored(rng, 1 + static_cast<int>(rng() % 7));
    const auto expected = brute_force_pairs(scored);
    const auto got = build_pairs("ins", scored, trial, uncapped);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].winner_id == expected[i].first);
      CHECK(got[i].loser_id == expected[i].second);
      CHECK(got[i].winner_score > got[i].loser_score);
      CHECK(got[i].instruction_id == "ins");
    }
  }
}

TEST_CASE("build_pairs fills texts, scores, and word lengths") {
  const std::vector<ScoredResponse> scored = {
      sr("a", 0.0, "three word answer"),
      sr("b", -1.0, "short"),
  };
  const auto pairs = build_pairs("ins-7", scored, 0);
  REQUIRE(pairs.size() == 1);
  const auto& p = pairs[0];
  CHECK(p.winner_id == "a");
  CHECK(p.winner_text == "three word answer");
  CHECK(p.loser_text == "short");
  CHECK(p.winner_score == 0.0);
  CHECK(p.loser_score == -1.0);
  CHECK(p.word_len_w == 3);
  CHECK(p.word_len_l == 1);
  CHECK(p.len_diff() == 2);
}

TEST_CASE("ties never produce a pair") {
  const std::vector<ScoredResponse> scored = {sr("a", -1.0, "x"), sr("b", -1.0, "y"),
                                              sr("c", -1.0, "z")};
  CHECK(build_pairs("ins", scored, 0).empty());
}

TEST_CASE("the cap samples without replacement, deterministically") {
  std::mt19937_64 rng(22);
  PairOptions capped;
  capped.max_pairs_per_instruction = 2;
  for (int trial = 0; trial < 200; ++trial) {
    const auto scored = random_scored(rng, 2 + static_cast<int>(rng() % 8));
    const auto all = brute_force_pairs(scored);
    const std::uint64_t seed = rng();

    const auto got = build_pairs("ins", scored, seed, capped);
    CHECK(got.size() == std::min<std::size_t>(2, all.size()));

    // Every emitted pair is one of the enumerable ones, and no duplicates.
    std::set<std::pair<std::string, std::string>> unique;
    for (const auto& p : got) {
      const auto key = std::make_pair(p.winner_id, p.loser_id);
      CHECK(std::find(all.begin(), all.end(), key) != all.end());
      CHECK(unique.insert(key).second);
    }

    // Same seed, same sample; byte-for-byte.
    const auto again = build_pairs("ins", scored, seed, capped);
    REQUIRE(again.size() == got.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(again[i].winner_id == got[i].winner_id);
      CHECK(again[i].loser_id == got[i].loser_id);
    }
  }
}

TEST_CASE("the capped sample is a plain seeded uniform draw over the enumeration") {
  // Pin the exact sampling procedure so checkpoint resumes reproduce it.
  const std::vector<ScoredResponse> scored = {
      sr("a", 3.0, "aa"), sr("b", 2.0, "bb"), sr("c", 1.0, "cc"), sr("d", 0.0, "dd")};
  PairOptions capped;
  capped.max_pairs_per_instruction = 2;
  const std::uint64_t seed = 987654321;

  const auto got = build_pairs("ins", scored, seed, capped);
  REQUIRE(got.size() == 2);

  std::vector<std::pair<std::string, std::string>> all = brute_force_pairs(scored);
  std::vector<std::pair<std::string, std::string>> expected;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(expected), 2, rng);
  CHECK(got[0].winner_id == expected[0].first);
  CHECK(got[0].loser_id == expected[0].second);
  CHECK(got[1].winner_id == expected[1].first);
  CHECK(got[1].loser_id == expected[1].second);
}

TEST_CASE("identical texts can be excluded from pairing") {
  const std::vector<ScoredResponse> scored = {sr("a", 1.0, "same words"),
                                              sr("b", 0.0, "same words"),
                                              sr("c", 0.0, "different")};
  CHECK(build_pairs("ins", scored, 0).size() == 2);

  PairOptions dedup;
  dedup.dedup_identical_texts = true;
  const auto pairs = build_pairs("ins", scored, 0, dedup);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].loser_id == "c");
}

TEST_CASE("per-instruction seeds are stable and distinct") {
  CHECK(derive_pair_seed(42, "ins-1") == derive_pair_seed(42, "ins-1"));
  CHECK(derive_pair_seed(42, "ins-1") != derive_pair_seed(42, "ins-2"));
  CHECK(derive_pair_seed(42, "ins-1") != derive_pair_seed(43, "ins-1"));
}

TEST_CASE("adding an instruction never reshuffles an existing one's sample") {
  // Uniform one-word texts keep every length diff at zero, so the shared
  // length filter cannot disturb the comparison.
  auto make = [](const std::string& id, std::uint64_t salt) {
    InstructionScores is;
    is.instruction_id = id;
    for (int i = 0; i < 8; ++i) {
      is.scored.push_back(
          sr("r" + std::to_string(i), -static_cast<double>((i + salt) % 5), "word"));
    }
    return is;
  };
  const InstructionScores a = make("ins-a", 1);
  const InstructionScores b = make("ins-b", 3);

  PairOptions options;
  options.max_pairs_per_instruction = 2;
  const auto solo = build_pair_dataset({a}, 42, options, true);
  const auto both = build_pair_dataset({a, b}, 42, options, true);

  std::vector<std::pair<std::string, std::string>> solo_a, both_a;
  for (const auto& p : solo.pairs) solo_a.emplace_back(p.winner_id, p.loser_id);
  for (const auto& p : both.pairs) {
    if (p.instruction_id == "ins-a") both_a.emplace_back(p.winner_id, p.loser_id);
  }
  CHECK(solo_a == both_a);
}

TEST_CASE("length filter drops the most negative pair first until the mean recovers") {
  SUBCASE("worked example") {
    std::vector<PreferencePair> pairs = {pair_with_lengths(0, 10, "short"),
                                         pair_with_lengths(5, 3, "long")};
    // diffs are -10 and +2, mean -4: one drop lifts the mean to +2.
    const PairDataset out = filter_length_bias(pairs);
    CHECK(out.dropped_count == 1);
    REQUIRE(out.pairs.size() == 1);
    CHECK(out.pairs[0].winner_id == "wlong");
    CHECK(out.mean_len_diff == 2.0);
  }

  SUBCASE("a mean of exactly -1 is still unacceptable") {
    std::vector<PreferencePair> pairs = {pair_with_lengths(1, 2, "a"),
                                         pair_with_lengths(4, 4, "b")};
    // diffs -1 and 0, mean -0.5: kept as is.
    CHECK(filter_length_bias(pairs).dropped_count == 0);
    CHECK_THROWS_AS(filter_length_bias({pair_with_lengths(1, 2, "only")}), ExhaustedDataset);
  }

  SUBCASE("empty input is a valid empty dataset") {
    const PairDataset out = filter_length_bias({});
    CHECK(out.pairs.empty());
    CHECK(out.mean_len_diff == 0.0);
    CHECK(out.dropped_count == 0);
  }

  SUBCASE("uniformly short winners exhaust the dataset") {
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < 5; ++i) pairs.push_back(pair_with_lengths(1, 6, std::to_string(i)));
    CHECK_THROWS_AS(filter_length_bias(std::move(pairs)), ExhaustedDataset);
  }
}

TEST_CASE("length filter matches a sort-based oracle and is idempotent") {
  std::mt19937_64 rng(44);
  int nontrivial = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<PreferencePair> pairs;
    std::vector<long long> diffs;
    for (int i = 0; i < n; ++i) {
      const long long len_w = static_cast<long long>(rng() % 12);
      const long long len_l = static_cast<long long>(rng() % 12);
      pairs.push_back(pair_with_lengths(len_w, len_l, std::to_string(i)));
      diffs.push_back(len_w - len_l);
    }

    // Oracle: the smallest k such that the mean of the n-k largest diffs
    // exceeds -1; dropping minimums one at a time reaches exactly that k.
    std::vector<long long> sorted = diffs;
    std::sort(sorted.begin(), sorted.end());
    std::size_t k = 0;
    while (k < sorted.size()) {
      double sum = 0.0;
      for (std::size_t i = k; i < sorted.size(); ++i) sum += static_cast<double>(sorted[i]);
      if (sum / static_cast<double>(sorted.size() - k) > -1.0) break;
      ++k;
    }

    if (k == sorted.size()) {
      CHECK_THROWS_AS(filter_length_bias(std::move(pairs)), ExhaustedDataset);
      continue;
    }
    const PairDataset out = filter_length_bias(std::move(pairs));
    if (k > 0) ++nontrivial;
    CHECK(out.dropped_count == k);
    CHECK(out.pairs.size() == sorted.size() - k);
    CHECK(out.mean_len_diff > -1.0);

    std::multiset<long long> kept_expected(sorted.begin() + static_cast<long>(k), sorted.end());
    std::multiset<long long> kept_actual;
    for (const auto& p : out.pairs) kept_actual.insert(p.len_diff());
    CHECK(kept_expected == kept_actual);

    // Idempotence: a second pass has nothing left to drop.
    const PairDataset again = filter_length_bias(out.pairs);
    CHECK(again.dropped_count == 0);
    CHECK(again.pairs.size() == out.pairs.size());
  }
  CHECK(nontrivial > 10);  // the generator must actually exercise dropping
}

TEST_CASE("merging datasets rejects shared instruction ids") {
  PairDataset a;
  a.pairs = {pair_with_lengths(4, 2, "x")};
  a.pairs[0].instruction_id = "ins-a";
  a.dropped_count = 3;
  PairDataset b;
  b.pairs = {pair_with_lengths(1, 1, "y")};
  b.pairs[0].instruction_id = "ins-b";

  const PairDataset merged = merge_datasets({a, b});
  CHECK(merged.pairs.size() == 2);
  CHECK(merged.dropped_count == 3);
  CHECK(merged.mean_len_diff == 1.0);  // (+2 + 0) / 2

  PairDataset clash;
  clash.pairs = {pair_with_lengths(2, 1, "z")};
  clash.pairs[0].instruction_id = "ins-a";
  CHECK_THROWS_AS(merge_datasets({a, clash}), IdCollision);
  CHECK(merge_datasets({}).pairs.empty());
}

TEST_CASE("whole-dataset construction respects the cap and the length invariant") {
  std::mt19937_64 rng(55);
  for (const bool cap_then_filter : {true, false}) {
    CAPTURE(cap_then_filter);
    for (int trial = 0; trial < 60; ++trial) {
      std::vector<InstructionScores> inputs;
      const int instructions = 1 + static_cast<int>(rng() % 5);
      for (int i = 0; i < instructions; ++i) {
        InstructionScores is;
        is.instruction_id = "ins-" + std::to_string(i);
        is.scored = random_scored(rng, 2 + static_cast<int>(rng() % 6));
        inputs.push_back(is);
      }
      PairOptions options;
      options.max_pairs_per_instruction = 2;

      PairDataset out;
      try {
        out = build_pair_dataset(inputs, trial, options, cap_then_filter);
      } catch (const ExhaustedDataset&) {
        continue;  // legitimately possible with adversarial lengths
      }
      if (!out.pairs.empty()) CHECK(out.mean_len_diff > -1.0);
      std::map<std::string, int> per_instruction;
      for (const auto& p : out.pairs) ++per_instruction[p.instruction_id];
      for (const auto& [id, count] : per_instruction) {
        CAPTURE(id);
        CHECK(count <= 2);
      }
      // Determinism in both modes.
      try {
        const PairDataset again = build_pair_dataset(inputs, trial, options, cap_then_filter);
        REQUIRE(again.pairs.size() == out.pairs.size());
        for (std::size_t i = 0; i < out.pairs.size(); ++i) {
          CHECK(again.pairs[i].winner_id == out.pairs[i].winner_id);
          CHECK(again.pairs[i].loser_id == out.pairs[i].loser_id);
        }
      } catch (const ExhaustedDataset&) {
        CHECK(false);  // the second run must behave like the first
      }
    }
  }
}

TEST_CASE("filter-then-cap keeps the invariant even after down-sampling") {
  // Uncapped, the long-winner pairs mask the short-winner ones; a naive cap
  // could then leave a biased subset, so the mode re-filters after capping.
  InstructionScores is;
  is.instruction_id = "ins";
  is.scored = {sr("w1", 1.0, "one two three four five six"), sr("w2", 1.0, "one"),
               sr("l1", 0.0, "a b c"), sr("l2", 0.0, "a b c d")};
  PairOptions options;
  options.max_pairs_per_instruction = 2;
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    try {
      const PairDataset out = build_pair_dataset({is}, seed, options, false);
      CHECK(out.pairs.size() <= 2);
      if (!out.pairs.empty()) CHECK(out.mean_len_diff > -1.0);
    } catch (const ExhaustedDataset&) {
      // acceptable outcome when the surviving sample is all short winners
    }
  }
}

TEST_CASE("zero enumerable pairs yields an empty dataset, not an error") {
  InstructionScores is;
  is.instruction_id = "ins";
  is.scored = {sr("a", -1.0, "x"), sr("b", -1.0, "y")};
  for (const bool mode : {true, false}) {
    const PairDataset out = build_pair_dataset({is}, 0, {}, mode);
    CHECK(out.pairs.empty());
    CHECK(out.dropped_count == 0);
  }
  CHECK(build_pair_dataset({}, 0, {}, true).pairs.empty());
}

TEST_CASE("pair records survive the detail file round trip") {
  testutil::TempDir dir;
  PairDataset ds;
  PreferencePair p = pair_with_lengths(4, 2, "r");
  p.instruction_id = "ins-3";
  p.winner_text = "longer winner text here";
  p.loser_text = "loser";
  p.winner_score = -0.5;
  p.loser_score = -2.0;
  ds.pairs = {p};
  ds.mean_len_diff = 2.0;

  const std::string path = dir.file("pairs.jsonl");
  write_pairs_detail(path, ds);

  const auto manifest = json::parse(testutil::read_file(jsonl::manifest_path_for(path)));
  CHECK(manifest.at("schema") == "preference_pairs.v1");
  CHECK(manifest.at("lines") == 1);

  const PairDataset back = read_pairs_detail(path);
  REQUIRE(back.pairs.size() == 1);
  CHECK(back.pairs[0].instruction_id == "ins-3");
  CHECK(back.pairs[0].winner_text == "longer winner text here");
  CHECK(back.pairs[0].winner_score == -0.5);
  CHECK(back.pairs[0].word_len_w == 4);
  CHECK(back.mean_len_diff == 2.0);
}

TEST_CASE("the trainer file carries prompt, image, and both texts per pair") {
  testutil::TempDir dir;
  PairDataset ds;
  PreferencePair p = pair_with_lengths(2, 1, "t");
  p.instruction_id = "ins-1";
  p.winner_text = "chosen text";
  p.loser_text = "rejected";
  p.winner_score = 0.0;
  p.loser_score = -1.0;
  ds.pairs = {p};

  std::map<std::string, Instruction> instructions;
  Instruction ins;
  ins.id = "ins-1";
  ins.prompt = "Describe the photo.";
  ins.image = "/data/img.jpg";
  instructions["ins-1"] = ins;

  const std::string path = dir.file("train.jsonl");
  write_trainer_dataset(path, ds, instructions);
  const auto records = jsonl::read_records_checked(path, "trainer_dataset.v1");
  REQUIRE(records.size() == 1);
  CHECK(records[0].at("instruction_id") == "ins-1");
  CHECK(records[0].at("prompt") == "Describe the photo.");
  CHECK(records[0].at("image") == "/data/img.jpg");
  CHECK(records[0].at("chosen") == "chosen text");
  CHECK(records[0].at("rejected") == "rejected");
  CHECK(records[0].at("winner_score") == 0.0);
  CHECK(records[0].at("loser_score") == -1.0);

  // A text-only instruction writes an explicit null image.
  instructions["ins-1"].image.reset();
  write_trainer_dataset(path, ds, instructions);
  CHECK(jsonl::read_records_checked(path, "trainer_dataset.v1")[0].at("image").is_null());

  // Every pair must resolve to an instruction record.
  ds.pairs[0].instruction_id = "ins-unknown";
  CHECK_THROWS_AS(write_trainer_dataset(path, ds, instructions), PreconditionError);
}
