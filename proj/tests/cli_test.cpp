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

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "srt/cli.h"

namespace srt {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class Scratch {
 public:
  explicit Scratch(const std::string& name)
      : dir_(fs::temp_directory_path() / ("srt_cli_test_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Scratch() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& leaf) const { return dir_ / leaf; }
  std::string str(const std::string& leaf) const { return (dir_ / leaf).string(); }

 private:
  fs::path dir_;
};

constexpr const char* kSmallConfig = R"({
  "seed": 3,
  "policy": {"kind": "drifting_markov", "vocab_size": 24, "order": 1,
             "drift_rate": 0.05, "eos_prob": 0.05},
  "dataset": {"synthetic": {"num_prompts": 6, "prompt_len": 4}},
  "generation": {"max_new_tokens": 48},
  "schedule": {"train_batch_size": 3, "samples_per_prompt": 3, "epochs": 2,
               "batch_slots": 6},
  "analysis": {"ablate_k": [2]}
})";

void write_config(const Scratch& s) {
  std::ofstream(s / "run.json") << kSmallConfig;
}

TEST_CASE("simulate writes self-describing artifacts") {
  Scratch s("simulate");
  write_config(s);
  const CliRun r = cli({"simulate", "-c", s.str("run.json"), "-o", s.str("a"), "--quiet"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.empty());
  for (const char* f : {"reports.jsonl", "summary.csv", "lengths.csv", "resolved_config.json"}) {
    CHECK_MESSAGE(fs::exists(s / "a" / f), f);
  }
  // Rerunning from the emitted config reproduces the reports.
  REQUIRE(cli({"simulate", "-c", (s / "a" / "resolved_config.json").string(), "-o",
               s.str("b"), "-q"})
              .code == kExitOk);
  CHECK(slurp(s / "a" / "reports.jsonl") == slurp(s / "b" / "reports.jsonl"));
}

TEST_CASE("same config and seed give byte-identical reports") {
  Scratch s("repeat");
  write_config(s);
  REQUIRE(cli({"simulate", "-c", s.str("run.json"), "-o", s.str("a"), "-q"}).code == 0);
  REQUIRE(cli({"simulate", "-c", s.str("run.json"), "-o", s.str("b"), "-q"}).code == 0);
  CHECK(slurp(s / "a" / "reports.jsonl") == slurp(s / "b" / "reports.jsonl"));
  REQUIRE(cli({"--seed", "4", "simulate", "-c", s.str("run.json"), "-o", s.str("c"), "-q"})
              .code == 0);
  CHECK(slurp(s / "a" / "reports.jsonl") != slurp(s / "c" / "reports.jsonl"));
  // Global flags are also accepted after the subcommand.
  REQUIRE(cli({"simulate", "-c", s.str("run.json"), "-o", s.str("d"), "--seed", "4", "-q"})
              .code == 0);
  CHECK(slurp(s / "c" / "reports.jsonl") == slurp(s / "d" / "reports.jsonl"));
}

TEST_CASE("config and usage problems exit with 1") {
  Scratch s("errors");
  const CliRun missing = cli({"simulate", "-c", s.str("nope.json")});
  CHECK(missing.code == kExitUsage);
  CHECK(missing.err.find("nope.json") != std::string::npos);
  std::ofstream(s / "bad.json") << R"({"tree": {"depth": 3}})";
  CHECK(cli({"simulate", "-c", s.str("bad.json"), "-o", s.str("o")}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"simulate", "--mode", "fast", "-o", s.str("o")}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"verify-exactness", "--trials", "0"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("verify-exactness passes and its negative control fails with a reproducer") {
  const CliRun ok = cli({"verify-exactness", "--trials", "25"});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("25 of 25") != std::string::npos);

  const CliRun bad = cli({"verify-exactness", "--trials", "50", "--corrupt-rng"});
  CHECK(bad.code == kExitInvariant);
  const auto at = bad.err.find("--trial-seed ");
  REQUIRE(at != std::string::npos);
  std::istringstream rest(bad.err.substr(at + 13));
  std::string seed;
  rest >> seed;
  CHECK(cli({"verify-exactness", "--trial-seed", seed, "--corrupt-rng"}).code == kExitInvariant);
  CHECK(cli({"verify-exactness", "--trial-seed", seed}).code == kExitOk);
}

TEST_CASE("ablate writes one summary row per mode, K and step") {
  Scratch s("ablate");
  write_config(s);
  const CliRun r = cli({"ablate", "-c", s.str("run.json"), "-o", s.str("o")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("identical training rollouts") != std::string::npos);
  const std::string summary = slurp(s / "o" / "ablation_summary.csv");
  // Four strategies, K in {3, 2}, four steps each, plus the header.
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 4 * 2 * 4);
  const std::string sweep = slurp(s / "o" / "k_sweep.csv");
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 3);
  CHECK(fs::exists(s / "o" / "accepted_curves.csv"));
}

TEST_CASE("overlap, replay and dump-tree") {
  Scratch s("misc");
  write_config(s);
  REQUIRE(cli({"overlap", "-c", s.str("run.json"), "-o", s.str("ov"), "-n", "2", "-q"})
              .code == kExitOk);
  const std::string overlap = slurp(s / "ov" / "overlap.csv");
  // Six prompts seen once per epoch.
  CHECK(std::count(overlap.begin(), overlap.end(), '\n') == 1 + 6 * 2);

  std::ofstream(s / "corpus.txt") << "# toy\n1 2 3 0\n1 2 4 0\n";
  REQUIRE(cli({"replay", "--corpus", s.str("corpus.txt"), "-o", s.str("rp"), "-q"}).code ==
          kExitOk);
  CHECK(slurp(s / "rp" / "resolved_config.json").find("\"replay\"") != std::string::npos);
  CHECK(cli({"replay", "--corpus", s.str("absent.txt"), "-o", s.str("rp2")}).code ==
        kExitUsage);

  const CliRun one = cli({"dump-tree", "-c", s.str("run.json"), "--prompt", "p1"});
  REQUIRE(one.code == kExitOk);
  CHECK(one.out.rfind("srt-tree 1\n", 0) == 0);
  CHECK(cli({"dump-tree", "-c", s.str("run.json"), "--prompt", "zz"}).code == kExitUsage);
  REQUIRE(cli({"dump-tree", "-c", s.str("run.json"), "-o", s.str("dt"), "-q"}).code == 0);
  CHECK(slurp(s / "dt" / "trees" / "p1.tree") == one.out);
}

TEST_CASE("golden files are written once and then enforced") {
  Scratch s("golden");
  write_config(s);
  const std::string golden = s.str("gold/reports.jsonl");
  CHECK(cli({"simulate", "-c", s.str("run.json"), "-o", s.str("o"), "--golden", golden, "-q"})
            .code == kExitOk);
  CHECK(fs::exists(golden));
  CHECK(cli({"simulate", "-c", s.str("run.json"), "-o", s.str("o"), "--golden", golden, "-q"})
            .code == kExitOk);
  CHECK(cli({"--seed", "99", "simulate", "-c", s.str("run.json"), "-o", s.str("o"),
             "--golden", golden, "-q"})
            .code == kExitInvariant);
}

TEST_CASE("environment supplies the output directory and seed") {
  Scratch s("env");
  write_config(s);
  ::setenv("SRT_OUT_DIR", s.str("from_env").c_str(), 1);
  ::setenv("SRT_SEED", "41", 1);
  const int code = cli({"simulate", "-c", s.str("run.json"), "-q"}).code;
  ::setenv("SRT_SEED", "forty", 1);
  const int bad = cli({"simulate", "-c", s.str("run.json"), "-q"}).code;
  ::unsetenv("SRT_OUT_DIR");
  ::unsetenv("SRT_SEED");
  CHECK(code == kExitOk);
  CHECK(bad == kExitUsage);
  CHECK(slurp(s / "from_env" / "resolved_config.json").find("\"seed\": 41") !=
        std::string::npos);
}

}  // namespace
}  // namespace srt
