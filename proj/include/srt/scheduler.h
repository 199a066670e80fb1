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
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "srt/engine.h"
#include "srt/policy.h"
#include "srt/tree_cache.h"

namespace srt {

enum class SimulationMode {
  // No drafting; one token per engine step.
  kBaseline,
  // Trees receive completed responses only, at training-step boundaries.
  kHistoryOnly,
  // Online updates from running rollouts, optionally run-ahead generation.
  kSrt,
};

std::string_view mode_name(SimulationMode mode);
SimulationMode parse_mode(std::string_view name);

struct Prompt {
  std::string id;
  std::vector<TokenId> tokens;
};

struct SimulationConfig {
  std::vector<Prompt> dataset;
  std::int32_t train_batch_size = 16;
  std::int32_t samples_per_prompt = 1;
  std::int32_t epochs = 1;
  std::int32_t batch_slots = 64;
  bool run_ahead = false;
  bool on_the_fly_updates = true;
  // Future dataset positions run-ahead may target; -1 means one training
  // step's worth of prompts.
  std::int32_t lookahead_window = -1;
  // Run-ahead skips prompts whose tree holds more than this fraction of
  // max_nodes.
  double run_ahead_fullness = 0.5;
  PolicySpec policy;
  std::int32_t max_new_tokens = 256;
  std::uint64_t seed = 0;
  TreeConfig tree;
  CostModel cost;
  SimulationMode mode = SimulationMode::kSrt;

  void validate() const;
  std::int32_t effective_lookahead() const;
  std::int32_t steps_per_epoch() const;
};

struct PromptBreakdown {
  std::string prompt_id;
  std::int64_t sequences = 0;
  std::int64_t tokens = 0;
  std::int64_t engine_steps = 0;
  std::int64_t accepted = 0;
  std::int64_t last_finish_tick = 0;
};

struct StepReport {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t sequences = 0;
  std::int64_t engine_steps_total = 0;
  std::int64_t tokens_total = 0;
  std::int64_t accepted_total = 0;
  // accepted_total / engine_steps_total over training rollouts.
  double mean_accepted = 0.0;
  std::int64_t fallback_steps = 0;
  std::int64_t ticks = 0;
  double simulated_time = 0.0;
  // Slot-ticks with no training rollout while the step was running.
  std::int64_t bubble_slot_steps = 0;
  std::int64_t run_ahead_tokens = 0;
  std::int64_t run_ahead_sequences = 0;
  std::int64_t max_length = 0;
  double mean_length = 0.0;
  // Order-sensitive hash of every (sequence_id, tokens) returned this step.
  std::uint64_t rollout_digest = 0;
  std::vector<PromptBreakdown> per_prompt;
};

struct SequenceResult {
  std::string prompt_id;
  std::int32_t sample = 0;
  std::uint64_t sequence_id = 0;
  RolloutRecord record;
};

struct SimulationResult {
  std::vector<StepReport> reports;
  // Training rollouts, one vector per training step, in sequence-id order.
  std::vector<std::vector<SequenceResult>> rollouts;
  std::map<std::string, RolloutTree> trees;
  // Every run-ahead sequence id issued; none may appear in `rollouts`.
  std::vector<std::uint64_t> run_ahead_ids;
};

SimulationResult run_simulation(const SimulationConfig& config);

// Realized output lengths per training step, binned by `bin_width`; the
// last bin collects everything at or beyond max_new_tokens.
std::vector<std::int64_t> length_histogram(
    const std::vector<SequenceResult>& rollouts, std::int32_t bin_width,
    std::int32_t max_new_tokens);

enum class SlotKind { kFree, kReal, kRunAhead };

struct SlotOccupant {
  SlotKind kind = SlotKind::kFree;
  std::int64_t handle = -1;
};

// Fixed-capacity execution slots with a FIFO of waiting training rollouts.
// Waiting rollouts always win: at a tick boundary they take free slots
// first and then displace run-ahead occupants.
class SlotPool {
 public:
  explicit SlotPool(std::int32_t slots);

  void enqueue_real(std::int64_t handle);
  // Places waiting rollouts; returns the run-ahead handles displaced.
  std::vector<std::int64_t> fill_real();
  void place_run_ahead(std::size_t slot, std::int64_t handle);
  void release(std::size_t slot);

  const std::vector<SlotOccupant>& slots() const { return slots_; }
  std::size_t queued() const { return queue_.size(); }
  std::int32_t busy() const;
  std::int32_t free() const;

 private:
  std::vector<SlotOccupant> slots_;
  std::deque<std::int64_t> queue_;
};

// Slots not holding a training rollout this tick (free or running ahead).
std::vector<std::size_t> detect_bubbles(const std::vector<SlotOccupant>& slots);

inline constexpr std::uint64_t kRunAheadIdTag = std::uint64_t{1} << 63;

}  // namespace srt
