#include "feedloop/generate.hpp"

#include <set>

#include "feedloop/errors.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

CandidateSet generate_candidates(Backend& backend, const Instruction& instruction,
                                 const GenerateOptions& options) {
  if (options.n < 2) {
    throw PreconditionError("candidate count must be >= 2, got " + std::to_string(options.n));
  }
  if (instruction.prompt.empty()) {
    throw PreconditionError("instruction " + instruction.id + " has an empty prompt");
  }

  std::vector<int> indices(static_cast<std::size_t>(options.n));
  for (int i = 0; i < options.n; ++i) indices[static_cast<std::size_t>(i)] = i;

  auto candidates = util::parallel_map(indices, options.max_workers, [&](int i) {
    SamplingParams params = options.params_template;
    params.seed = options.seed_base + i;
    CandidateResponse c = backend.sample(instruction, params);
    c.response_id = instruction.id + "/c" + std::to_string(i);
    return c;
  });

  CandidateSet set;
  set.instruction_id = instruction.id;
  set.candidates = std::move(candidates);
  set.params_template = options.params_template;
  assert_deconfounded(set);
  return set;
}

std::vector<Instruction> read_instructions(const std::string& path) {
  auto records = jsonl::read_records_checked(path, kInstructionsSchema);
  std::vector<Instruction> out;
  out.reserve(records.size());
  std::set<std::string> seen;
  for (const auto& rec : records) {
    Instruction ins = rec.get<Instruction>();
    if (ins.id.empty()) throw SchemaError(path + ": instruction with empty id");
    if (ins.prompt.empty()) throw SchemaError(path + ": instruction " + ins.id + " has empty prompt");
    if (!seen.insert(ins.id).second) {
      throw IdCollision(path + ": duplicate instruction id " + ins.id);
    }
    out.push_back(std::move(ins));
  }
  return out;
}

void write_instructions(const std::string& path, const std::vector<Instruction>& instructions) {
  std::vector<nlohmann::json> records;
  records.reserve(instructions.size());
  for (const auto& ins : instructions) records.emplace_back(ins);
  jsonl::write_records_atomic(path, records, kInstructionsSchema);
}

void write_candidate_sets(const std::string& path, const std::vector<CandidateSet>& sets) {
  std::vector<nlohmann::json> records;
  records.reserve(sets.size());
  for (const auto& s : sets) records.emplace_back(s);
  jsonl::write_records_atomic(path, records, kCandidateSetsSchema);
}

std::vector<CandidateSet> read_candidate_sets(const std::string& path) {
  auto records = jsonl::read_records_checked(path, kCandidateSetsSchema);
  std::vector<CandidateSet> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(rec.get<CandidateSet>());
  return out;
}

}  // namespace feedloop
