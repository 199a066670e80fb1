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

#include "srt/engine.h"

#include <stdexcept>

#include <json.hpp>

namespace srt {

void GenerationParams::validate() const {
  if (max_new_tokens < 1) {
    throw std::invalid_argument("max_new_tokens must be >= 1");
  }
}

std::int64_t RolloutRecord::total_accepted() const {
  std::int64_t total = 0;
  for (const auto& s : steps) total += s.accepted;
  return total;
}

VerifyResult verify_draft(const PolicySpec& policy,
                          std::span<const TokenId> context,
                          const DraftTree& draft, std::int64_t start_position,
                          const GenerationParams& params) {
  if (draft.empty()) throw std::invalid_argument("verify_draft: empty draft");
  params.validate();

  VerifyResult result;
  std::vector<TokenId> ctx(context.begin(), context.end());
  std::vector<double> dist(static_cast<std::size_t>(policy.vocab_size()));
  std::int32_t at = -1;
  std::int64_t position = start_position;
  while (position < params.max_new_tokens) {
    policy.next_distribution(ctx, dist);
    const TokenId tau = sample_token(
        dist, rng_draw(params.seed, params.sequence_id,
                       static_cast<std::uint64_t>(position)));
    const std::int32_t next = draft.find_child(at, tau);
    if (next < 0) {
      result.bonus = tau;
      return result;
    }
    result.accepted.push_back(tau);
    if (tau == policy.eos_token()) return result;
    ctx.push_back(tau);
    at = next;
    ++position;
  }
  return result;
}

Rollout::Rollout(std::vector<TokenId> prompt, GenerationParams params)
    : params_(params), context_(prompt) {
  params_.validate();
  record_.prompt = std::move(prompt);
}

std::span<const TokenId> Rollout::last_emitted() const {
  return std::span<const TokenId>(record_.tokens).subspan(last_step_begin_);
}

TokenId Rollout::sample_at(const PolicySpec& policy,
                           std::uint64_t draw_index) {
  dist_.resize(static_cast<std::size_t>(policy.vocab_size()));
  policy.next_distribution(context_, dist_);
  return sample_token(dist_,
                      rng_draw(params_.seed, params_.sequence_id, draw_index));
}

bool Rollout::emit(TokenId token, TokenId eos) {
  record_.tokens.push_back(token);
  context_.push_back(token);
  if (token == eos) {
    record_.terminated_by = Termination::kEos;
    return false;
  }
  if (static_cast<std::int32_t>(record_.tokens.size()) >=
      params_.max_new_tokens) {
    record_.terminated_by = Termination::kLength;
    return false;
  }
  return true;
}

StepOutcome Rollout::step(const PolicySpec& policy, const RolloutTree* tree) {
  if (done()) throw std::logic_error("step() on a finished rollout");
  last_step_begin_ = record_.tokens.size();
  const std::uint64_t step_index = engine_steps_++;
  const TokenId eos = policy.eos_token();

  StepOutcome outcome;
  std::optional<SuffixMatch> match;
  if (tree != nullptr) match = tree->longest_suffix_match(context_);

  if (!match) {
    outcome.used_fallback = true;
    const auto pos = static_cast<std::int64_t>(record_.tokens.size());
    emit(sample_at(policy, static_cast<std::uint64_t>(pos)), eos);
    outcome.emitted = 1;
    if (params_.collect_metrics) record_.steps.push_back(outcome);
    return outcome;
  }

  const DraftTree draft = tree->assemble_draft(match->node, match->length);
  outcome.match_len = match->length;
  outcome.drafted = static_cast<std::int32_t>(draft.size());

  // Same walk as verify_draft, done in place on the rollout's context.
  std::int32_t at = -1;
  bool running = true;
  while (running) {
    const auto pos = static_cast<std::int64_t>(record_.tokens.size());
    const TokenId tau = sample_at(policy, static_cast<std::uint64_t>(pos));
    const std::int32_t next = draft.find_child(at, tau);
    if (next < 0) {
      TokenId bonus = tau;
      if (params_.keying == RngKeying::kCorruptStepIndex) {
        bonus = sample_at(policy, step_index);
      }
      running = emit(bonus, eos);
      ++outcome.emitted;
      break;
    }
    ++outcome.accepted;
    ++outcome.emitted;
    running = emit(tau, eos);
    at = next;
  }
  if (params_.collect_metrics) record_.steps.push_back(outcome);
  return outcome;
}

RolloutRecord baseline_generate(const PolicySpec& policy,
                                std::span<const TokenId> prompt,
                                const GenerationParams& params) {
  Rollout rollout(std::vector<TokenId>(prompt.begin(), prompt.end()), params);
  while (!rollout.done()) rollout.step(policy, nullptr);
  return rollout.take_record();
}

RolloutRecord speculative_generate(const PolicySpec& policy,
                                   std::span<const TokenId> prompt,
                                   const RolloutTree& tree,
                                   const GenerationParams& params) {
  Rollout rollout(std::vector<TokenId>(prompt.begin(), prompt.end()), params);
  while (!rollout.done()) rollout.step(policy, &tree);
  return rollout.take_record();
}

void write_step_trace(std::ostream& out, const RolloutRecord& record) {
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const auto& s = record.steps[i];
    nlohmann::ordered_json row;
    row["step"] = i;
    row["q"] = s.match_len;
    row["drafted"] = s.drafted;
    row["accepted"] = s.accepted;
    row["used_fallback"] = s.used_fallback;
    out << row.dump() << '\n';
  }
}

}  // namespace srt
