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

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "srt/analytics.h"
#include "srt/scheduler.h"

namespace srt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::int32_t kConfigSchemaVersion = 1;

struct SyntheticDataset {
  std::int32_t num_prompts = 16;
  std::int32_t prompt_len = 8;
  // Derived from the run seed when absent.
  std::optional<std::uint64_t> seed;
};

struct DatasetConfig {
  // Exactly one source is used: explicit prompts, a corpus file (one prompt
  // per line, ids "p<line>"), or a synthetic generator.
  std::vector<Prompt> prompts;
  std::string corpus;
  std::optional<SyntheticDataset> synthetic;
};

struct PolicyConfig {
  MarkovOptions markov;
  // Derived from the run seed when absent.
  std::optional<std::uint64_t> seed;
  // Replay policies only.
  std::string corpus;
  std::int32_t replay_order = 1;
};

struct AnalysisConfig {
  // Per-step update-phase cost; absent means calibrate so that rollout is
  // 65% of total time in baseline mode.
  std::optional<double> update_cost;
  std::int32_t overlap_n = 4;
  OverlapCounting overlap_counting = OverlapCounting::kOccurrences;
  std::vector<std::int32_t> ablate_k = {5, 10};
};

// Everything one run needs, as read from a config file. Relative paths are
// resolved against the config file's directory.
struct RunConfig {
  std::uint64_t seed = 0;
  SimulationMode mode = SimulationMode::kSrt;
  DatasetConfig dataset;
  PolicyConfig policy;
  std::int32_t max_new_tokens = 256;
  std::int32_t train_batch_size = 16;
  std::int32_t samples_per_prompt = 1;
  std::int32_t epochs = 1;
  std::int32_t batch_slots = 64;
  bool run_ahead = false;
  bool on_the_fly_updates = true;
  std::int32_t lookahead_window = -1;
  double run_ahead_fullness = 0.5;
  TreeConfig tree;
  CostModel cost;
  AnalysisConfig analysis;
};

RunConfig parse_config(const std::string& text, const std::string& base_dir = "");
// Throws ConfigError naming `path` when it cannot be read.
RunConfig load_config(const std::string& path);

// Fully populated config (all defaults and derived seeds filled in) that
// parse_config() maps back to the same run.
std::string resolved_config_json(const RunConfig& config);

std::uint64_t policy_seed(const RunConfig& config);
std::uint64_t dataset_seed(const RunConfig& config);

PolicySpec build_policy(const RunConfig& config);
std::vector<Prompt> build_dataset(const RunConfig& config);
SimulationConfig build_simulation(const RunConfig& config);

// Random prompts of tokens in [1, vocab) when the EOS token is 0, otherwise
// any token except EOS.
std::vector<Prompt> synthetic_prompts(std::int32_t num_prompts,
                                      std::int32_t prompt_len,
                                      std::int32_t vocab_size, TokenId eos,
                                      std::uint64_t seed);

}  // namespace srt
