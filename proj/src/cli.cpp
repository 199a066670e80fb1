/* Copyright 2026 The SRT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "srt/cli.h"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "srt/ablation.h"
#include "srt/analytics.h"
#include "srt/config.h"
#include "srt/exactness.h"
#include "text_util.h"

namespace srt {
namespace {

namespace fs = std::filesystem;
using internal::format_double;

constexpr const char* kDefaultOutDir = "srt_out";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

struct RunOptions {
  std::string config_path;
  std::string out_dir;
  std::string mode;
};

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

fs::path prepare_out_dir(const std::string& flag) {
  fs::path dir = flag.empty() ? fs::path(env("SRT_OUT_DIR").value_or(kDefaultOutDir))
                              : fs::path(flag);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

RunConfig load_run_config(const RunOptions& opts, const GlobalOptions& global) {
  RunConfig c = opts.config_path.empty() ? parse_config("{}") : load_config(opts.config_path);
  if (global.seed) c.seed = *global.seed;
  if (!opts.mode.empty()) {
    try {
      c.mode = parse_mode(opts.mode);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--mode: ") + e.what());
    }
  }
  return c;
}

std::string run_label(const RunConfig& c) {
  std::string label(mode_name(c.mode));
  if (c.mode == SimulationMode::kSrt && c.run_ahead) label += "_runahead";
  return label;
}

void write_lengths_csv(std::ostream& out, const SimulationResult& result,
                       std::int32_t max_new_tokens) {
  const std::int32_t width = std::max(1, max_new_tokens / 16);
  out << "step,bin_start,bin_end,count\n";
  for (std::size_t s = 0; s < result.rollouts.size(); ++s) {
    const auto hist = length_histogram(result.rollouts[s], width, max_new_tokens);
    for (std::size_t b = 0; b < hist.size(); ++b) {
      const auto lo = static_cast<std::int64_t>(b) * width;
      // The last bin is open-ended.
      const std::int64_t hi = b + 1 == hist.size() ? max_new_tokens : lo + width - 1;
      out << s << ',' << lo << ',' << hi << ',' << hist[b] << '\n';
    }
  }
}

// Compares `produced` with the golden file, writing it on first use.
int check_golden(const fs::path& golden, const std::string& produced, std::ostream& out,
                 std::ostream& err, bool quiet) {
  if (!fs::exists(golden)) {
    if (golden.has_parent_path()) fs::create_directories(golden.parent_path());
    write_text(golden, produced);
    if (!quiet) out << "golden written: " << golden.string() << '\n';
    return kExitOk;
  }
  std::ifstream in(golden, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  if (buf.str() != produced) {
    err << "reports differ from golden " << golden.string() << '\n';
    return kExitInvariant;
  }
  if (!quiet) out << "golden matches: " << golden.string() << '\n';
  return kExitOk;
}

int simulate_and_write(const RunConfig& config, const fs::path& dir,
                       const std::string& golden, const GlobalOptions& global,
                       std::ostream& out, std::ostream& err) {
  const SimulationConfig sim = build_simulation(config);
  const SimulationResult result = run_simulation(sim);
  const std::string label = run_label(config);

  std::ostringstream jsonl;
  write_reports_jsonl(jsonl, result.reports, label);
  write_text(dir / "reports.jsonl", jsonl.str());
  {
    std::ofstream csv = open_output(dir / "summary.csv");
    write_summary_csv(csv, result.reports, label, config.samples_per_prompt, true);
  }
  {
    std::ofstream csv = open_output(dir / "lengths.csv");
    write_lengths_csv(csv, result, config.max_new_tokens);
  }
  write_text(dir / "resolved_config.json", resolved_config_json(config));

  if (!global.quiet) {
    std::int64_t tokens = 0;
    double time = 0.0;
    for (const auto& r : result.reports) {
      tokens += r.tokens_total;
      time += r.simulated_time;
    }
    out << label << ": " << result.reports.size() << " steps, " << tokens
        << " tokens, simulated time " << format_double(time) << ", mean accepted "
        << format_double(mean_of_means(result.reports)) << '\n';
    out << "wrote " << dir.string() << '\n';
  }
  if (!golden.empty()) return check_golden(golden, jsonl.str(), out, err, global.quiet);
  return kExitOk;
}

void add_run_options(CLI::App* cmd, RunOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Run config (JSON)");
  cmd->add_option("-o,--out", opts.out_dir, "Output directory");
}

int cmd_simulate(const RunOptions& opts, const std::string& golden,
                 const GlobalOptions& global, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_run_config(opts, global);
  return simulate_and_write(config, prepare_out_dir(opts.out_dir), golden, global, out, err);
}

int cmd_replay(const RunOptions& opts, const std::string& corpus, std::int32_t order,
               std::int32_t vocab_size, const GlobalOptions& global, std::ostream& out,
               std::ostream& err) {
  RunConfig config = load_run_config(opts, global);
  // Without a config the vocabulary comes from the corpus.
  if (vocab_size >= 0) {
    config.policy.markov.vocab_size = vocab_size;
  } else if (opts.config_path.empty()) {
    config.policy.markov.vocab_size = 0;
  }
  config.policy.markov.kind = PolicyKind::kReplay;
  config.policy.corpus = corpus;
  config.policy.replay_order = order;
  return simulate_and_write(config, prepare_out_dir(opts.out_dir), "", global, out, err);
}

int cmd_ablate(const RunOptions& opts, const GlobalOptions& global, std::ostream& out) {
  const RunConfig config = load_run_config(opts, global);
  const fs::path dir = prepare_out_dir(opts.out_dir);
  const AblationResult result = run_ablation(config, config.analysis.ablate_k);
  {
    std::ofstream csv = open_output(dir / "ablation_summary.csv");
    write_ablation_summary_csv(csv, result);
  }
  {
    std::ofstream csv = open_output(dir / "accepted_curves.csv");
    write_curves_csv(csv, result.curves);
  }
  {
    std::ofstream csv = open_output(dir / "k_sweep.csv");
    write_k_sweep_csv(csv, result);
  }
  write_text(dir / "resolved_config.json", resolved_config_json(config));
  if (!global.quiet) {
    out << "all strategies produced identical training rollouts\n";
    for (const auto& row : result.sweep) {
      out << "K=" << row.k << ": mean accepted history_only "
          << format_double(row.history_only) << ", srt " << format_double(row.srt)
          << ", srt_runahead " << format_double(row.srt_runahead) << "; speedup "
          << format_double(row.speedup_runahead) << '\n';
    }
    out << "wrote " << dir.string() << '\n';
  }
  return kExitOk;
}

int cmd_overlap(const RunOptions& opts, std::int32_t n_flag, const std::string& counting_flag,
                const GlobalOptions& global, std::ostream& out) {
  RunConfig config = load_run_config(opts, global);
  if (n_flag > 0) config.analysis.overlap_n = n_flag;
  if (counting_flag == "distinct") {
    config.analysis.overlap_counting = OverlapCounting::kDistinct;
  } else if (counting_flag == "occurrences") {
    config.analysis.overlap_counting = OverlapCounting::kOccurrences;
  }
  const fs::path dir = prepare_out_dir(opts.out_dir);
  const SimulationConfig sim = build_simulation(config);
  const SimulationResult result = run_simulation(sim);
  const auto per = per_prompt_overlap(result.rollouts, config.analysis.overlap_n,
                                      config.analysis.overlap_counting);
  const std::int64_t steps_per_epoch = sim.steps_per_epoch();

  std::ofstream csv = open_output(dir / "overlap.csv");
  csv << "prompt_id,step,epoch,n,matched,total,overlap_fraction,historical_ngrams\n";
  std::int64_t compared = 0, grew = 0;
  for (const auto& [id, reports] : per) {
    for (const auto& r : reports) {
      csv << id << ',' << r.step << ',' << r.step / steps_per_epoch << ',' << r.n << ','
          << r.matched << ',' << r.total << ',' << format_double(r.overlap_fraction) << ','
          << r.historical_ngram_count << '\n';
    }
    if (reports.size() >= 2) {
      ++compared;
      if (reports[1].overlap_fraction > reports[0].overlap_fraction) ++grew;
    }
  }
  write_text(dir / "resolved_config.json", resolved_config_json(config));
  if (!global.quiet) {
    out << "prompts with higher overlap on their second visit: " << grew << " of "
        << compared << '\n';
    out << "wrote " << dir.string() << '\n';
  }
  return kExitOk;
}

int cmd_dump_tree(const RunOptions& opts, const std::string& prompt,
                  const GlobalOptions& global, std::ostream& out) {
  const RunConfig config = load_run_config(opts, global);
  const SimulationResult result = run_simulation(build_simulation(config));
  if (!prompt.empty()) {
    const auto it = result.trees.find(prompt);
    if (it == result.trees.end()) throw UsageError("no prompt with id '" + prompt + "'");
    out << it->second.snapshot();
    return kExitOk;
  }
  const fs::path dir = prepare_out_dir(opts.out_dir) / "trees";
  fs::create_directories(dir);
  for (const auto& [id, tree] : result.trees) write_text(dir / (id + ".tree"), tree.snapshot());
  write_text(dir.parent_path() / "resolved_config.json", resolved_config_json(config));
  if (!global.quiet) out << "wrote " << result.trees.size() << " trees to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_verify(std::int64_t trials, std::optional<std::uint64_t> single, bool corrupt,
               const GlobalOptions& global, std::ostream& out, std::ostream& err) {
  const RngKeying keying = corrupt ? RngKeying::kCorruptStepIndex : RngKeying::kPosition;
  if (single) {
    const ExactnessTrial trial = make_trial(*single);
    const TrialOutcome o = run_trial(trial, keying);
    out << describe_trial(trial) << '\n';
    if (o.identical && o.accounting_ok) {
      out << "identical, " << o.accepted << " tokens accepted\n";
      return kExitOk;
    }
    err << "divergence at output position " << o.first_divergence << '\n';
    return kExitInvariant;
  }
  if (trials < 1) throw UsageError("--trials must be >= 1");
  const std::uint64_t base = global.seed.value_or(0);
  const ExactnessSummary s = verify_exactness(trials, base, keying);
  if (s.ok()) {
    if (!global.quiet) {
      out << s.identical << " of " << s.trials << " trials identical, "
          << s.total_accepted << " tokens accepted\n";
    }
    return kExitOk;
  }
  err << (s.trials - s.identical) << " of " << s.trials << " trials diverged";
  if (s.accounting_failures > 0) err << ", " << s.accounting_failures << " with bad accounting";
  err << '\n';
  const ExactnessTrial trial = make_trial(*s.first_failure_seed);
  err << "first failure: trial " << *s.first_failure << " at output position "
      << s.first_failure_position << '\n';
  err << "reproducer: " << describe_trial(trial) << '\n';
  err << "rerun with: verify-exactness --trial-seed " << *s.first_failure_seed
      << (corrupt ? " --corrupt-rng" : "") << '\n';
  return kExitInvariant;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative rollout simulator with per-prompt tree caches", "srt_sim"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  GlobalOptions global;
  std::uint64_t seed_flag = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "Override the run seed");
  app.add_flag("-q,--quiet", global.quiet, "Only print errors");

  RunOptions run;
  std::string golden;
  auto* simulate = app.add_subcommand("simulate", "Run one simulation and write step reports");
  add_run_options(simulate, run);
  simulate->add_option("--mode", run.mode, "baseline, history_only or srt");
  simulate->add_option("--golden", golden,
                       "Compare reports.jsonl with this file, writing it if absent");

  auto* ablate = app.add_subcommand("ablate", "Compare cache strategies and sweep K");
  add_run_options(ablate, run);

  std::int32_t overlap_n = 0;
  std::string counting;
  auto* overlap = app.add_subcommand("overlap", "Per-prompt n-gram overlap across steps");
  add_run_options(overlap, run);
  overlap->add_option("--mode", run.mode, "baseline, history_only or srt");
  overlap->add_option("-n,--ngram", overlap_n, "n-gram length");
  overlap->add_option("--counting", counting, "occurrences or distinct")
      ->check(CLI::IsMember({"occurrences", "distinct"}));

  std::string corpus;
  std::int32_t replay_order = 1;
  auto* replay = app.add_subcommand("replay", "Simulate with a policy estimated from a corpus");
  add_run_options(replay, run);
  replay->add_option("--mode", run.mode, "baseline, history_only or srt");
  replay->add_option("--corpus", corpus, "One token sequence per line")->required();
  replay->add_option("--order", replay_order, "Context length of the replay table");
  std::int32_t replay_vocab = -1;
  replay->add_option("--vocab-size", replay_vocab, "Vocabulary size, 0 to infer");

  std::string prompt;
  auto* dump = app.add_subcommand("dump-tree", "Write tree snapshots after a simulation");
  add_run_options(dump, run);
  dump->add_option("--mode", run.mode, "baseline, history_only or srt");
  dump->add_option("--prompt", prompt, "Print one prompt's tree to stdout");

  std::int64_t trials = 1000;
  std::uint64_t single_seed = 0;
  bool corrupt = false;
  auto* verify = app.add_subcommand("verify-exactness",
                                    "Compare speculative and plain decoding on random trials");
  verify->add_option("--trials", trials, "Number of randomized trials");
  auto* single_opt = verify->add_option("--trial-seed", single_seed, "Rerun one trial");
  verify->add_flag("--corrupt-rng", corrupt, "Break rng keying (negative control)");

  std::vector<const char*> argv{"srt_sim"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (seed_opt->count() > 0) {
      global.seed = seed_flag;
    } else if (const auto s = env("SRT_SEED")) {
      global.seed = internal::parse_number<std::uint64_t>(*s, "SRT_SEED");
    }
    if (simulate->parsed()) return cmd_simulate(run, golden, global, out, err);
    if (ablate->parsed()) return cmd_ablate(run, global, out);
    if (overlap->parsed()) return cmd_overlap(run, overlap_n, counting, global, out);
    if (replay->parsed()) return cmd_replay(run, corpus, replay_order, replay_vocab, global, out, err);
    if (dump->parsed()) return cmd_dump_tree(run, prompt, global, out);
    if (verify->parsed()) {
      std::optional<std::uint64_t> single;
      if (single_opt->count() > 0) single = single_seed;
      return cmd_verify(trials, single, corrupt, global, out, err);
    }
  } catch (const ExactnessViolation& e) {
    err << "exactness violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::logic_error& e) {
    // invalid_argument is a logic_error but signals bad input, not a bug.
    if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr ||
        dynamic_cast<const std::out_of_range*>(&e) != nullptr) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    err << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace srt
