#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feedloop/types.hpp"

namespace feedloop {

/// Pairing input: one candidate with its annotation score attached.
struct ScoredResponse {
  std::string response_id;
  std::string text;
  double score = 0.0;
};

struct PreferencePair {
  std::string instruction_id;
  std::string winner_id;
  std::string winner_text;
  std::string loser_id;
  std::string loser_text;
  double winner_score = 0.0;
  double loser_score = 0.0;
  long long word_len_w = 0;
  long long word_len_l = 0;

  long long len_diff() const { return word_len_w - word_len_l; }
};

struct PairDataset {
  std::vector<PreferencePair> pairs;
  double mean_len_diff = 0.0;  // 0 when empty
  std::size_t dropped_count = 0;
};

struct PairOptions {
  int max_pairs_per_instruction = 2;
  bool dedup_identical_texts = false;
};

/// Stable per-instruction RNG seed so adding instructions never reshuffles
/// the samples drawn for existing ones.
std::uint64_t derive_pair_seed(std::uint64_t base_seed, const std::string& instruction_id);

/**
 * Enumerates every ordered pair with strictly greater score (winner first),
 * then uniformly samples at most max_pairs_per_instruction of them without
 * replacement, seeded. Zero pairs is a valid result when all scores tie.
 */
std::vector<PreferencePair> build_pairs(const std::string& instruction_id,
                                        const std::vector<ScoredResponse>& scored,
                                        std::uint64_t rng_seed, const PairOptions& options = {});

/**
 * Drops short-winner pairs until mean(word_len_w - word_len_l) > -1: while
 * the mean is <= -1, the pair with the most negative difference goes first.
 * Throws ExhaustedDataset when a nonempty input loses every pair.
 */
PairDataset filter_length_bias(std::vector<PreferencePair> pairs);

/// Concatenates datasets; an instruction_id appearing in more than one source
/// is an IdCollision. mean_len_diff is recomputed, dropped counts summed.
PairDataset merge_datasets(const std::vector<PairDataset>& datasets);

struct InstructionScores {
  std::string instruction_id;
  std::vector<ScoredResponse> scored;
};

/**
 * Whole-dataset construction over many instructions. cap_then_filter=true:
 * per-instruction build_pairs (cap applied), concatenate in input order, then
 * filter_length_bias once. cap_then_filter=false: enumerate uncapped, filter,
 * sample per instruction down to the cap, then re-filter so the mean
 * invariant survives the capping. Per-instruction RNG seeds come from
 * derive_pair_seed(base_seed, id) either way.
 */
PairDataset build_pair_dataset(const std::vector<InstructionScores>& inputs,
                               std::uint64_t base_seed, const PairOptions& options,
                               bool cap_then_filter);

void to_json(nlohmann::json& j, const PreferencePair& p);
void from_json(const nlohmann::json& j, PreferencePair& p);

/// Full-fidelity pair records (ids, texts, scores, word lengths).
void write_pairs_detail(const std::string& path, const PairDataset& dataset);
PairDataset read_pairs_detail(const std::string& path);

/// The external-trainer contract file: one record per pair with fields
/// {instruction_id, prompt, image, chosen, rejected, winner_score,
/// loser_score}. `instructions` supplies prompt and image per id.
void write_trainer_dataset(const std::string& path, const PairDataset& dataset,
                           const std::map<std::string, Instruction>& instructions);

inline const char* kPairsDetailSchema = "preference_pairs.v1";
inline const char* kTrainerDatasetSchema = "trainer_dataset.v1";

}  // namespace feedloop
