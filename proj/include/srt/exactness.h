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

// Randomized speculative-versus-plain decoding trials. Each trial is a pure
// function of one 64-bit seed, which doubles as its reproducer.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srt/engine.h"

namespace srt {

struct ExactnessTrial {
  std::uint64_t trial_seed = 0;
  MarkovOptions policy;
  TreeConfig tree;
  // Earlier rollouts of the same prompt that fill the tree before decoding.
  std::int32_t prior_rollouts = 0;
  std::uint64_t prior_seed = 0;
  std::vector<TokenId> prompt;
  GenerationParams params;
};

struct TrialOutcome {
  bool identical = false;
  // First differing output position, -1 when identical.
  std::int64_t first_divergence = -1;
  std::uint64_t base_steps = 0;
  std::uint64_t spec_steps = 0;
  std::int64_t accepted = 0;
  std::int64_t multi_token_steps = 0;
  // Per-step draft/accept/emit bookkeeping is consistent.
  bool accounting_ok = false;
};

// Vocabulary 32..128, Markov order 0..2, trees seeded from 0..6 earlier
// rollouts, max_new_tokens 1..256.
ExactnessTrial make_trial(std::uint64_t trial_seed);
RolloutTree build_trial_tree(const ExactnessTrial& trial, const PolicySpec& policy);
TrialOutcome run_trial(const ExactnessTrial& trial,
                       RngKeying keying = RngKeying::kPosition);

// Seed of trial `index` in a batch started from `base_seed`.
std::uint64_t trial_seed(std::uint64_t base_seed, std::int64_t index);

struct ExactnessSummary {
  std::int64_t trials = 0;
  std::int64_t identical = 0;
  std::int64_t accounting_failures = 0;
  std::int64_t total_accepted = 0;
  // First trial that diverged, if any.
  std::optional<std::int64_t> first_failure;
  std::optional<std::uint64_t> first_failure_seed;
  std::int64_t first_failure_position = -1;

  bool ok() const { return identical == trials && accounting_failures == 0; }
};

ExactnessSummary verify_exactness(std::int64_t trials, std::uint64_t base_seed,
                                  RngKeying keying = RngKeying::kPosition);

// One line naming everything needed to rerun a trial.
std::string describe_trial(const ExactnessTrial& trial);

}  // namespace srt
