#include "feedloop/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "feedloop/annotate.hpp"
#include "feedloop/backend.hpp"
#include "feedloop/config.hpp"
#include "feedloop/errors.hpp"
#include "feedloop/generate.hpp"
#include "feedloop/judge.hpp"
#include "feedloop/jsonl.hpp"
#include "feedloop/log.hpp"
#include "feedloop/loop.hpp"
#include "feedloop/pairs.hpp"
#include "feedloop/prompts.hpp"
#include "feedloop/reward.hpp"
#include "feedloop/util.hpp"

namespace feedloop {

namespace {

namespace fs = std::filesystem;

struct GlobalArgs {
  std::string config_path;
  std::string run_dir;
  long long seed = 0;
  int max_concurrency = 0;  // 0: take backend.max_concurrent from config
  std::string log_level = "warn";
};

struct Context {
  GlobalArgs globals;
  RunConfig config;

  int workers() const {
    return globals.max_concurrency > 0 ? globals.max_concurrency : config.backend.max_concurrent;
  }
};

Context make_context(const GlobalArgs& globals) {
  log::set_level(log::parse_level(globals.log_level));
  if (globals.config_path.empty()) throw ConfigError("--config is required");
  Context ctx;
  ctx.globals = globals;
  ctx.config = load_config(globals.config_path);
  if (globals.max_concurrency > 0) ctx.config.backend.max_concurrent = globals.max_concurrency;
  if (!globals.run_dir.empty()) {
    fs::create_directories(globals.run_dir);
    util::write_text_file_atomic(globals.run_dir + "/effective_config.json",
                                 config_to_json(ctx.config).dump(2) + "\n");
  }
  return ctx;
}

std::shared_ptr<Backend> backend_for(const Context& ctx, const std::string& field,
                                     const std::string& id) {
  if (id.empty()) throw ConfigError(field + ": endpoint id required");
  return make_backend(ctx.config.endpoint_by_id(id), ctx.config.backend);
}

// ---------------------------------------------------------------------------
// subcommand bodies

struct GenerateArgs {
  std::string instructions_path;
  std::string out_path;
  int n_override = 0;
  long long seed_base = 0;
  bool seed_base_set = false;
  std::string endpoint_override;
};

void cmd_generate(const Context& ctx, const GenerateArgs& args) {
  const std::string endpoint_id =
      args.endpoint_override.empty() ? ctx.config.generation.endpoint : args.endpoint_override;
  auto backend = backend_for(ctx, "generation.endpoint", endpoint_id);

  GenerateOptions gen;
  gen.n = args.n_override > 0 ? args.n_override : ctx.config.generation.n;
  gen.params_template = ctx.config.generation.params_template();
  gen.seed_base = args.seed_base_set ? args.seed_base : ctx.config.generation.seed_base;
  gen.max_workers = ctx.workers();

  const auto instructions = read_instructions(args.instructions_path);
  std::vector<CandidateSet> sets;
  sets.reserve(instructions.size());
  for (const auto& ins : instructions) {
    sets.push_back(generate_candidates(*backend, ins, gen));
  }
  write_candidate_sets(args.out_path, sets);
  std::cout << "generated " << sets.size() << " candidate sets (n=" << gen.n << ") -> "
            << args.out_path << "\n";
}

struct AnnotateArgs {
  std::string candidates_path;
  std::string instructions_path;
  std::string out_path;
  std::string strategy_override;
};

void cmd_annotate(const Context& ctx, const AnnotateArgs& args) {
  RunConfig cfg = ctx.config;
  if (!args.strategy_override.empty()) {
    cfg.annotation.strategy = strategy_from_string(args.strategy_override);
  }
  const AnnotateOptions opts = annotate_options_from(cfg, ctx.workers());
  auto labeler = backend_for(ctx, "annotation.labeler", cfg.annotation.labeler);
  std::shared_ptr<Backend> text_backend = labeler;
  if (opts.strategy != Strategy::SELF_REWARD) {
    text_backend = backend_for(ctx, "annotation.text_backend", cfg.annotation.text_backend);
  }

  const auto instructions = read_instructions(args.instructions_path);
  std::map<std::string, const Instruction*> by_id;
  for (const auto& ins : instructions) by_id[ins.id] = &ins;

  const auto sets = read_candidate_sets(args.candidates_path);
  std::vector<AnnotatedSet> annotated;
  annotated.reserve(sets.size());
  std::size_t unscorable = 0;
  for (const auto& set : sets) {
    auto it = by_id.find(set.instruction_id);
    if (it == by_id.end()) {
      throw SchemaError("candidate set for unknown instruction " + set.instruction_id);
    }
    annotated.push_back(annotate_set(*labeler, *text_backend, *it->second, set, opts));
    unscorable += annotated.back().unscorable.size();
  }
  write_annotated_sets(args.out_path, annotated);
  std::cout << "annotated " << annotated.size() << " sets (strategy="
            << to_string(opts.strategy) << ", unscorable=" << unscorable << ") -> "
            << args.out_path << "\n";
}

struct PairsArgs {
  std::string scores_path;
  std::string candidates_path;
  std::string instructions_path;
  std::string out_path;
  std::string detail_path;
};

void cmd_pairs(const Context& ctx, const PairsArgs& args) {
  const auto instructions = read_instructions(args.instructions_path);
  const auto sets = read_candidate_sets(args.candidates_path);
  const auto annotated = read_annotated_sets(args.scores_path);

  std::map<std::string, std::string> text_by_response;
  for (const auto& set : sets) {
    for (const auto& c : set.candidates) text_by_response[c.response_id] = c.text;
  }
  std::map<std::string, const AnnotatedSet*> scores_by_id;
  for (const auto& a : annotated) scores_by_id[a.instruction_id] = &a;

  std::vector<InstructionScores> inputs;
  for (const auto& set : sets) {
    auto it = scores_by_id.find(set.instruction_id);
    if (it == scores_by_id.end()) continue;
    InstructionScores in;
    in.instruction_id = set.instruction_id;
    for (const auto& s : it->second->scores) {
      if (ctx.config.pairing.exclude_zero_claim && s.zero_claims) continue;
      auto t = text_by_response.find(s.response_id);
      if (t == text_by_response.end()) {
        throw SchemaError("score for unknown response " + s.response_id);
      }
      in.scored.push_back(ScoredResponse{s.response_id, t->second, s.score});
    }
    inputs.push_back(std::move(in));
  }

  PairOptions pair_opts;
  pair_opts.max_pairs_per_instruction = ctx.config.pairing.max_pairs_per_instruction;
  pair_opts.dedup_identical_texts = ctx.config.pairing.dedup_identical_texts;
  const PairDataset dataset =
      build_pair_dataset(inputs, static_cast<std::uint64_t>(ctx.globals.seed), pair_opts,
                         ctx.config.pairing.cap_then_filter);

  std::map<std::string, Instruction> ins_by_id;
  for (const auto& ins : instructions) ins_by_id[ins.id] = ins;
  write_trainer_dataset(args.out_path, dataset, ins_by_id);
  if (!args.detail_path.empty()) write_pairs_detail(args.detail_path, dataset);
  std::cout << "built " << dataset.pairs.size() << " pairs (dropped=" << dataset.dropped_count
            << ", mean_len_diff=" << dataset.mean_len_diff << ") -> " << args.out_path << "\n";
}

struct IterateArgs {
  std::string instructions_path;
  std::string until;
};

void cmd_iterate(const Context& ctx, const IterateArgs& args) {
  if (ctx.globals.run_dir.empty()) throw ConfigError("--run-dir is required for iterate");
  LoopState state;
  if (fs::exists(ctx.globals.run_dir + "/state.json")) {
    state = load_state(ctx.globals.run_dir);
  } else {
    if (args.instructions_path.empty()) {
      throw ConfigError("--instructions is required to start a new run");
    }
    state = init_run(ctx.globals.run_dir, ctx.config, args.instructions_path,
                     static_cast<std::uint64_t>(ctx.globals.seed));
  }
  LoopOptions opts;
  opts.max_workers = ctx.workers();
  if (!args.until.empty()) {
    try {
      opts.until = stage_from_string(args.until);
    } catch (const Error&) {
      throw ConfigError("--until: unknown stage " + args.until);
    }
  }
  state = drive(state, ctx.config, opts);
  std::cout << "run " << ctx.globals.run_dir << ": status=" << to_string(state.status)
            << " iteration=" << state.iteration_index << " datasets=" << state.datasets.size()
            << "\n";
}

struct BonArgs {
  std::string prompts_path;
  std::string out_path;
  int n_override = 0;
  double beta_override = 0.0;
  std::string selector_override;
};

void cmd_bon(const Context& ctx, const BonArgs& args) {
  const int n = args.n_override > 0 ? args.n_override : ctx.config.reward.bon_n;
  const double beta = args.beta_override > 0.0 ? args.beta_override : ctx.config.reward.beta;
  const Selector selector = args.selector_override.empty()
                                ? ctx.config.reward.selector
                                : selector_from_string(args.selector_override);

  auto policy = backend_for(ctx, "reward.policy", ctx.config.reward.policy);
  std::shared_ptr<Backend> reference;
  if (selector != Selector::ppl) {
    reference = backend_for(ctx, "reward.reference", ctx.config.reward.reference);
  }

  GenerateOptions gen;
  gen.n = n;
  gen.params_template = ctx.config.generation.params_template();
  gen.seed_base = ctx.config.generation.seed_base;
  gen.max_workers = ctx.workers();

  const auto instructions = read_instructions(args.prompts_path);
  std::vector<nlohmann::json> records;
  records.reserve(instructions.size());
  double sampled_words = 0.0;
  std::size_t sampled_count = 0;
  std::vector<std::string> selected;

  for (const auto& ins : instructions) {
    std::vector<std::string> texts;
    if (n == 1) {
      // BoN with a single candidate is the candidate; no scoring round-trip.
      SamplingParams params = gen.params_template;
      params.seed = gen.seed_base;
      texts.push_back(policy->sample(ins, params).text);
    } else {
      const CandidateSet set = generate_candidates(*policy, ins, gen);
      texts.reserve(set.candidates.size());
      for (const auto& c : set.candidates) texts.push_back(c.text);
    }
    for (const auto& t : texts) sampled_words += static_cast<double>(util::word_count(t));
    sampled_count += texts.size();

    BonResult result;
    if (n == 1) {
      RewardScore only;
      only.response_id = ins.id + "/c0";
      only.beta = beta;
      result.chosen_index = 0;
      result.n = 1;
      result.rewards.push_back(only);
    } else if (selector == Selector::ppl) {
      result = ppl_baseline(*policy, ins, texts, ctx.workers());
    } else {
      result = best_of_n(*policy, *reference, ins, texts, beta, selector, ctx.workers());
    }
    selected.push_back(texts[static_cast<std::size_t>(result.chosen_index)]);

    nlohmann::json rec;
    rec["instruction_id"] = ins.id;
    rec["n"] = result.n;
    rec["selector"] = to_string(selector);
    rec["beta"] = beta;
    rec["chosen_index"] = result.chosen_index;
    rec["chosen_response_id"] = ins.id + "/c" + std::to_string(result.chosen_index);
    rec["chosen_text"] = selected.back();
    rec["rewards"] = result.rewards;
    records.push_back(std::move(rec));
  }
  jsonl::write_records_atomic(args.out_path, records, kBonResultsSchema);

  const double sampled_mean =
      sampled_count == 0 ? 0.0 : sampled_words / static_cast<double>(sampled_count);
  std::cout << "selected " << records.size() << " responses (selector=" << to_string(selector)
            << ", n=" << n << ", length_bias="
            << length_bias_report(selected, sampled_mean) << ") -> " << args.out_path << "\n";
}

struct JudgeArgs {
  std::string cases_path;
  std::string out_path;
  std::string report_path;
  std::string table_path;
};

void cmd_judge(const Context& ctx, const JudgeArgs& args) {
  auto judge = backend_for(ctx, "judge.endpoint", ctx.config.judge.endpoint);
  const std::string tmpl =
      ctx.config.judge.template_path.empty()
          ? prompts::load_template(prompts::kJudgePairwise)
          : util::read_text_file(ctx.config.judge.template_path);

  JudgeOptions opts;
  opts.randomize_order = ctx.config.judge.randomize_order;
  opts.seed = static_cast<std::uint64_t>(ctx.globals.seed);
  opts.max_workers = ctx.workers();

  const auto cases = read_judge_cases(args.cases_path);
  const auto verdicts = judge_cases(*judge, cases, tmpl, opts);
  write_verdicts(args.out_path, verdicts);

  std::map<std::string, std::string> categories;
  for (const auto& c : cases) categories[c.case_id] = c.category.empty() ? "uncategorized" : c.category;
  const WinRateReport report = win_rates(verdicts, categories);
  if (!args.report_path.empty()) {
    util::write_text_file_atomic(args.report_path, report_to_json(report).dump(2) + "\n");
  }
  if (!args.table_path.empty()) {
    util::write_text_file_atomic(args.table_path, render_report_table(report));
  }
  std::cout << "judged " << cases.size() << " cases: trust=" << report.trust.rate()
            << " overall=" << report.overall.rate() << " invalid=" << report.invalid_count
            << " -> " << args.out_path << "\n";
}

void cmd_validate(const GlobalArgs& globals) {
  if (globals.config_path.empty()) throw ConfigError("--config is required");
  const RunConfig cfg = load_config(globals.config_path);
  std::cout << "config ok: " << cfg.endpoints.size() << " endpoints, strategy="
            << to_string(cfg.annotation.strategy) << ", iterations=" << cfg.loop.iterations
            << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"preference-feedback pipeline: candidate generation, claim-level annotation, "
               "pair construction, loop driving, reward reranking, pairwise judging"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs globals;
  app.add_option("--config", globals.config_path, "path to the run configuration JSON");
  app.add_option("--run-dir", globals.run_dir, "run directory for state and config snapshots");
  app.add_option("--seed", globals.seed, "seed for subcommand-level randomness");
  app.add_option("--max-concurrency", globals.max_concurrency,
                 "cap on concurrent requests and workers (overrides config)");
  app.add_option("--log-level", globals.log_level, "debug|info|warn|error|off");

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "sample candidate response sets");
  gen_cmd->add_option("--instructions", gen_args.instructions_path, "instructions.v1 input")
      ->required();
  gen_cmd->add_option("--out", gen_args.out_path, "candidate_sets.v1 output")->required();
  gen_cmd->add_option("--n", gen_args.n_override, "candidates per instruction");
  gen_cmd->add_option("--seed-base", gen_args.seed_base, "first seed of the per-set ladder")
      ->each([&](const std::string&) { gen_args.seed_base_set = true; });
  gen_cmd->add_option("--endpoint", gen_args.endpoint_override, "endpoint id override");

  AnnotateArgs ann_args;
  auto* ann_cmd = app.add_subcommand("annotate", "score candidates with claim-level feedback");
  ann_cmd->add_option("--candidates", ann_args.candidates_path, "candidate_sets.v1 input")
      ->required();
  ann_cmd->add_option("--instructions", ann_args.instructions_path, "instructions.v1 input")
      ->required();
  ann_cmd->add_option("--out", ann_args.out_path, "response_scores.v1 output")->required();
  ann_cmd->add_option("--strategy", ann_args.strategy_override, "REJ_N|REJ_P|SELF_REWARD");

  PairsArgs pairs_args;
  auto* pairs_cmd = app.add_subcommand("pairs", "build the preference dataset");
  pairs_cmd->add_option("--scores", pairs_args.scores_path, "response_scores.v1 input")
      ->required();
  pairs_cmd->add_option("--candidates", pairs_args.candidates_path, "candidate_sets.v1 input")
      ->required();
  pairs_cmd->add_option("--instructions", pairs_args.instructions_path, "instructions.v1 input")
      ->required();
  pairs_cmd->add_option("--out", pairs_args.out_path, "trainer_dataset.v1 output")->required();
  pairs_cmd->add_option("--detail", pairs_args.detail_path, "preference_pairs.v1 detail output");

  IterateArgs iter_args;
  auto* iter_cmd = app.add_subcommand("iterate", "drive the feedback-training loop");
  iter_cmd->add_option("--instructions", iter_args.instructions_path,
                       "instruction pool (required for a new run)");
  iter_cmd->add_option("--until", iter_args.until,
                       "stop when this stage is reached (generating|annotating|pairing|"
                       "awaiting_trainer)");

  BonArgs bon_args;
  auto* bon_cmd = app.add_subcommand("bon", "best-of-n selection under the configured reward");
  bon_cmd->add_option("--prompts", bon_args.prompts_path, "instructions.v1 input")->required();
  bon_cmd->add_option("--out", bon_args.out_path, "bon_results.v1 output")->required();
  bon_cmd->add_option("--n", bon_args.n_override, "candidates per prompt");
  bon_cmd->add_option("--beta", bon_args.beta_override, "reward scale");
  bon_cmd->add_option("--selector", bon_args.selector_override, "normalized|naive|ppl");

  JudgeArgs judge_args;
  auto* judge_cmd = app.add_subcommand("judge", "reference-grounded pairwise evaluation");
  judge_cmd->add_option("--cases", judge_args.cases_path, "judge_cases.v1 input")->required();
  judge_cmd->add_option("--out", judge_args.out_path, "verdicts.v1 output")->required();
  judge_cmd->add_option("--report", judge_args.report_path, "win-rate report JSON output");
  judge_cmd->add_option("--table", judge_args.table_path, "human-readable table output");

  auto* validate_cmd = app.add_subcommand("validate", "parse and range-check a configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (validate_cmd->parsed()) {
      log::set_level(log::parse_level(globals.log_level));
      cmd_validate(globals);
      return 0;
    }
    const Context ctx = make_context(globals);
    if (gen_cmd->parsed()) {
      cmd_generate(ctx, gen_args);
    } else if (ann_cmd->parsed()) {
      cmd_annotate(ctx, ann_args);
    } else if (pairs_cmd->parsed()) {
      cmd_pairs(ctx, pairs_args);
    } else if (iter_cmd->parsed()) {
      cmd_iterate(ctx, iter_args);
    } else if (bon_cmd->parsed()) {
      cmd_bon(ctx, bon_args);
    } else if (judge_cmd->parsed()) {
      cmd_judge(ctx, judge_args);
    }
    return 0;
  } catch (const Error& e) {
    nlohmann::json report{{"error", e.code()}, {"message", e.what()}, {"stage", stage}};
    std::cerr << report.dump() << "\n";
    return std::string(e.code()) == "config_error" ? 2 : 1;
  } catch (const std::exception& e) {
    nlohmann::json report{{"error", "internal_error"}, {"message", e.what()}, {"stage", stage}};
    std::cerr << report.dump() << "\n";
    return 1;
  }
}

}  // namespace feedloop
