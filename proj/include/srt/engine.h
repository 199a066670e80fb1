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
#include <ostream>
#include <span>
#include <vector>

#include "srt/policy.h"
#include "srt/tree_cache.h"

namespace srt {

enum class RngKeying {
  kPosition,
  // Test hook: keys bonus tokens by engine step instead of output position,
  // which breaks equivalence with plain decoding whenever drafts are accepted.
  kCorruptStepIndex,
};

struct GenerationParams {
  std::int32_t max_new_tokens = 256;
  std::uint64_t sequence_id = 0;
  std::uint64_t seed = 0;
  // When false, per-step outcomes are not kept in the record.
  bool collect_metrics = true;
  RngKeying keying = RngKeying::kPosition;

  void validate() const;
};

struct StepOutcome {
  std::int32_t drafted = 0;
  std::int32_t accepted = 0;
  std::int32_t emitted = 0;
  bool used_fallback = false;
  std::int32_t match_len = 0;
};

enum class Termination { kRunning, kEos, kLength };

struct RolloutRecord {
  std::vector<TokenId> prompt;
  std::vector<TokenId> tokens;
  std::vector<StepOutcome> steps;
  Termination terminated_by = Termination::kRunning;

  std::int64_t total_accepted() const;
};

struct VerifyResult {
  std::vector<TokenId> accepted;
  // Absent when the accepted path already hit EOS or the length cap.
  std::optional<TokenId> bonus;
};

// Walks `draft` from its root: at output position p the policy's own sample
// for that position is drawn; a draft child carrying that token is accepted
// and descended into, otherwise the sample becomes the bonus token.
// `context` is prompt plus everything generated before `start_position`.
VerifyResult verify_draft(const PolicySpec& policy,
                          std::span<const TokenId> context,
                          const DraftTree& draft, std::int64_t start_position,
                          const GenerationParams& params);

// Incremental decoder for one sequence; each call to step() is one engine
// step (one verification pass of the policy).
class Rollout {
 public:
  Rollout(std::vector<TokenId> prompt, GenerationParams params);

  // With `tree` null (or no usable match) this emits exactly one token.
  StepOutcome step(const PolicySpec& policy, const RolloutTree* tree);

  std::uint64_t engine_steps() const { return engine_steps_; }
  bool done() const { return record_.terminated_by != Termination::kRunning; }
  const RolloutRecord& record() const { return record_; }
  RolloutRecord take_record() { return std::move(record_); }
  const GenerationParams& params() const { return params_; }
  std::span<const TokenId> context() const { return context_; }
  // Tokens emitted by the most recent step.
  std::span<const TokenId> last_emitted() const;

 private:
  // Policy sample for the next position using draw counter `draw_index`.
  TokenId sample_at(const PolicySpec& policy, std::uint64_t draw_index);
  // Appends and returns false once generation has terminated.
  bool emit(TokenId token, TokenId eos);

  GenerationParams params_;
  RolloutRecord record_;
  std::vector<TokenId> context_;
  std::vector<double> dist_;
  std::size_t last_step_begin_ = 0;
  std::uint64_t engine_steps_ = 0;
};

RolloutRecord baseline_generate(const PolicySpec& policy,
                                std::span<const TokenId> prompt,
                                const GenerationParams& params);

// The tree is only read; callers update it between steps.
RolloutRecord speculative_generate(const PolicySpec& policy,
                                   std::span<const TokenId> prompt,
                                   const RolloutTree& tree,
                                   const GenerationParams& params);

// Simulated cost of one engine step: 1 plus a surcharge per drafted token.
struct CostModel {
  double draft_token_surcharge = 0.0;

  double step_cost(const StepOutcome& outcome) const {
    return 1.0 + draft_token_surcharge * outcome.drafted;
  }
};

// One JSON object per line: {"step","q","drafted","accepted","used_fallback"}.
void write_step_trace(std::ostream& out, const RolloutRecord& record);

}  // namespace srt
