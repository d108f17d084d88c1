#pragma once

#include <string>
#include <vector>

#include "feedloop/backend.hpp"
#include "feedloop/types.hpp"

namespace feedloop {

struct GenerateOptions {
  int n = 10;
  SamplingParams params_template;  // seed field ignored; filled per candidate
  long long seed_base = 0;
  int max_workers = 4;
};

/**
 * Samples n candidates for one instruction, all with the decoding parameters
 * of params_template and seeds seed_base+0 .. seed_base+n-1, so candidates
 * differ only in seed. Any candidate failure fails the whole set; partial
 * sets are never returned. The set is re-checked with assert_deconfounded
 * before it is handed back.
 */
CandidateSet generate_candidates(Backend& backend, const Instruction& instruction,
                                 const GenerateOptions& options);

/// Reads instructions.v1 records; enforces unique ids and nonempty prompts.
std::vector<Instruction> read_instructions(const std::string& path);

void write_instructions(const std::string& path, const std::vector<Instruction>& instructions);

void write_candidate_sets(const std::string& path, const std::vector<CandidateSet>& sets);
std::vector<CandidateSet> read_candidate_sets(const std::string& path);

inline const char* kInstructionsSchema = "instructions.v1";
inline const char* kCandidateSetsSchema = "candidate_sets.v1";

}  // namespace feedloop
