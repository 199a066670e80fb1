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

#include "srt/scheduler.h"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace srt {

namespace {

constexpr std::int32_t kMaxSequencesPerStep = 1 << 20;

struct RealSequence {
  std::size_t prompt_index = 0;
  std::int32_t sample = 0;
  std::uint64_t sequence_id = 0;
  RolloutTree* tree = nullptr;
  Rollout rollout;
  StreamCursor cursor;
  std::int64_t finish_tick = -1;
};

struct RunAheadSequence {
  RolloutTree* tree = nullptr;
  Rollout rollout;
  StreamCursor cursor;
  std::size_t slot = 0;
};

std::uint64_t digest_rollouts(const std::vector<SequenceResult>& rollouts) {
  std::uint64_t h = 0;
  for (const auto& r : rollouts) {
    h = hash_words({h, r.sequence_id, r.record.tokens.size()});
    for (TokenId t : r.record.tokens) {
      h = hash_words({h, static_cast<std::uint64_t>(t)});
    }
  }
  return h;
}

void stream_tokens(RolloutTree& tree, StreamCursor& cursor,
                   std::span<const TokenId> tokens) {
  for (TokenId t : tokens) tree.extend_stream(cursor, t);
}

}  // namespace

std::string_view mode_name(SimulationMode mode) {
  switch (mode) {
    case SimulationMode::kBaseline:
      return "baseline";
    case SimulationMode::kHistoryOnly:
      return "history_only";
    case SimulationMode::kSrt:
      return "srt";
  }
  return "unknown";
}

SimulationMode parse_mode(std::string_view name) {
  if (name == "baseline") return SimulationMode::kBaseline;
  if (name == "history_only") return SimulationMode::kHistoryOnly;
  if (name == "srt") return SimulationMode::kSrt;
  throw std::invalid_argument("unknown mode '" + std::string(name) +
                              "' (expected baseline, history_only or srt)");
}

void SimulationConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("invalid simulation config: " + msg);
  };
  if (dataset.empty()) fail("dataset is empty");
  std::set<std::string> ids;
  for (const auto& p : dataset) {
    if (!ids.insert(p.id).second) fail("duplicate prompt id '" + p.id + "'");
    for (TokenId t : p.tokens) {
      if (t < 0 || t >= policy.vocab_size()) {
        fail("prompt '" + p.id + "' has a token outside the vocabulary");
      }
    }
  }
  if (train_batch_size < 1) fail("train_batch_size must be >= 1");
  if (samples_per_prompt < 1) fail("samples_per_prompt must be >= 1");
  if (static_cast<std::int64_t>(train_batch_size) * samples_per_prompt >
      kMaxSequencesPerStep) {
    fail("train_batch_size * samples_per_prompt is too large");
  }
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_slots < 1) fail("batch_slots must be >= 1");
  if (lookahead_window < -1) fail("lookahead_window must be >= 0");
  if (!(run_ahead_fullness > 0.0 && run_ahead_fullness <= 1.0)) {
    fail("run_ahead_fullness must lie in (0, 1]");
  }
  if (max_new_tokens < 1) fail("max_new_tokens must be >= 1");
  if (!(cost.draft_token_surcharge >= 0.0)) {
    fail("draft_token_surcharge must be >= 0");
  }
  policy.validate();
  tree.validate();
}

std::int32_t SimulationConfig::effective_lookahead() const {
  return lookahead_window < 0 ? train_batch_size : lookahead_window;
}

std::int32_t SimulationConfig::steps_per_epoch() const {
  const auto n = static_cast<std::int32_t>(dataset.size());
  return (n + train_batch_size - 1) / train_batch_size;
}

SlotPool::SlotPool(std::int32_t slots) {
  if (slots < 1) throw std::invalid_argument("SlotPool needs >= 1 slot");
  slots_.resize(static_cast<std::size_t>(slots));
}

void SlotPool::enqueue_real(std::int64_t handle) { queue_.push_back(handle); }

std::vector<std::int64_t> SlotPool::fill_real() {
  std::vector<std::int64_t> displaced;
  for (auto& s : slots_) {
    if (queue_.empty()) break;
    if (s.kind == SlotKind::kFree) {
      s = SlotOccupant{SlotKind::kReal, queue_.front()};
      queue_.pop_front();
    }
  }
  for (auto& s : slots_) {
    if (queue_.empty()) break;
    if (s.kind == SlotKind::kRunAhead) {
      displaced.push_back(s.handle);
      s = SlotOccupant{SlotKind::kReal, queue_.front()};
      queue_.pop_front();
    }
  }
  return displaced;
}

void SlotPool::place_run_ahead(std::size_t slot, std::int64_t handle) {
  if (slots_.at(slot).kind != SlotKind::kFree) {
    throw std::logic_error("run-ahead placed into an occupied slot");
  }
  slots_[slot] = SlotOccupant{SlotKind::kRunAhead, handle};
}

void SlotPool::release(std::size_t slot) { slots_.at(slot) = SlotOccupant{}; }

std::int32_t SlotPool::busy() const {
  return static_cast<std::int32_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const SlotOccupant& s) {
        return s.kind != SlotKind::kFree;
      }));
}

std::int32_t SlotPool::free() const {
  return static_cast<std::int32_t>(slots_.size()) - busy();
}

std::vector<std::size_t> detect_bubbles(const std::vector<SlotOccupant>& slots) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].kind != SlotKind::kReal) out.push_back(i);
  }
  return out;
}

std::vector<std::int64_t> length_histogram(
    const std::vector<SequenceResult>& rollouts, std::int32_t bin_width,
    std::int32_t max_new_tokens) {
  if (bin_width < 1) throw std::invalid_argument("bin_width must be >= 1");
  const std::size_t bins =
      static_cast<std::size_t>(max_new_tokens / bin_width) + 1;
  std::vector<std::int64_t> hist(bins, 0);
  for (const auto& r : rollouts) {
    const auto len = static_cast<std::int64_t>(r.record.tokens.size());
    const auto bin = std::min<std::size_t>(
        static_cast<std::size_t>(len / bin_width), bins - 1);
    ++hist[bin];
  }
  return hist;
}

SimulationResult run_simulation(const SimulationConfig& config) {
  config.validate();

  SimulationResult result;
  TreeConfig tree_config = config.tree;
  tree_config.vocab_size = config.policy.vocab_size();
  for (const auto& p : config.dataset) {
    result.trees.emplace(p.id, RolloutTree(p.id, tree_config));
  }

  const bool drafting = config.mode != SimulationMode::kBaseline;
  const bool srt = config.mode == SimulationMode::kSrt;
  const bool on_the_fly = srt && config.on_the_fly_updates;
  const bool run_ahead = srt && config.run_ahead;
  const auto n_prompts = static_cast<std::int64_t>(config.dataset.size());
  const std::int32_t steps_per_epoch = config.steps_per_epoch();
  const std::int32_t lookahead = config.effective_lookahead();
  const std::int64_t fullness_limit = static_cast<std::int64_t>(
      config.run_ahead_fullness * static_cast<double>(tree_config.max_nodes));

  PolicySpec policy = config.policy;
  std::int64_t global_step = 0;
  for (std::int32_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::int32_t in_epoch = 0; in_epoch < steps_per_epoch;
         ++in_epoch, ++global_step) {
      const std::int64_t begin =
          static_cast<std::int64_t>(in_epoch) * config.train_batch_size;
      const std::int64_t end =
          std::min<std::int64_t>(begin + config.train_batch_size, n_prompts);
      const std::int64_t next_cursor = end % n_prompts;

      StepReport report;
      report.step = global_step;
      report.epoch = epoch;

      // Training rollouts for this step, prompt-major.
      std::vector<RealSequence> real;
      real.reserve(static_cast<std::size_t>((end - begin) *
                                            config.samples_per_prompt));
      for (std::int64_t pi = begin; pi < end; ++pi) {
        const Prompt& prompt = config.dataset[static_cast<std::size_t>(pi)];
        RolloutTree* tree = &result.trees.at(prompt.id);
        for (std::int32_t k = 0; k < config.samples_per_prompt; ++k) {
          GenerationParams params;
          params.max_new_tokens = config.max_new_tokens;
          params.seed = config.seed;
          params.sequence_id = (static_cast<std::uint64_t>(global_step) << 20) |
                               static_cast<std::uint64_t>(real.size());
          real.push_back(RealSequence{static_cast<std::size_t>(pi), k,
                                      params.sequence_id, tree,
                                      Rollout(prompt.tokens, params),
                                      tree->open_stream(), -1});
        }
      }

      SlotPool pool(config.batch_slots);
      for (std::size_t i = 0; i < real.size(); ++i) {
        pool.enqueue_real(static_cast<std::int64_t>(i));
      }
      std::unordered_map<std::int64_t, RunAheadSequence> ahead;
      std::uint64_t ahead_counter = 0;
      std::int32_t round_robin = 0;
      std::size_t remaining = real.size();

      // Round-robin over the lookahead window; -1 when every candidate's
      // tree is above the fullness limit.
      auto next_run_ahead_target = [&]() -> std::int64_t {
        for (std::int32_t tries = 0; tries < lookahead; ++tries) {
          const std::int64_t pos = (next_cursor + round_robin) % n_prompts;
          round_robin = (round_robin + 1) % lookahead;
          const auto& id = config.dataset[static_cast<std::size_t>(pos)].id;
          if (result.trees.at(id).node_count() <= fullness_limit) return pos;
        }
        return -1;
      };

      std::int64_t tick = 0;
      double time = 0.0;
      while (remaining > 0) {
        for (std::int64_t handle : pool.fill_real()) ahead.erase(handle);

        if (run_ahead && pool.queued() == 0 && lookahead > 0) {
          const auto& slots = pool.slots();
          for (std::size_t s = 0; s < slots.size(); ++s) {
            if (slots[s].kind != SlotKind::kFree) continue;
            const std::int64_t target = next_run_ahead_target();
            if (target < 0) break;
            const Prompt& prompt = config.dataset[static_cast<std::size_t>(target)];
            RolloutTree* tree = &result.trees.at(prompt.id);
            GenerationParams params;
            params.max_new_tokens = config.max_new_tokens;
            params.seed = config.seed;
            params.collect_metrics = false;
            params.sequence_id = kRunAheadIdTag |
                                 (static_cast<std::uint64_t>(global_step) << 32) |
                                 ahead_counter++;
            const auto handle = static_cast<std::int64_t>(params.sequence_id);
            ahead.emplace(handle,
                          RunAheadSequence{tree, Rollout(prompt.tokens, params),
                                           tree->open_stream(), s});
            pool.place_run_ahead(s, handle);
            result.run_ahead_ids.push_back(params.sequence_id);
            ++report.run_ahead_sequences;
          }
        }

        report.bubble_slot_steps +=
            static_cast<std::int64_t>(detect_bubbles(pool.slots()).size());

        // Occupants advance in ascending sequence id.
        std::vector<std::pair<std::uint64_t, std::size_t>> order;
        for (std::size_t s = 0; s < pool.slots().size(); ++s) {
          const SlotOccupant& occ = pool.slots()[s];
          if (occ.kind == SlotKind::kReal) {
            order.emplace_back(real[static_cast<std::size_t>(occ.handle)].sequence_id, s);
          } else if (occ.kind == SlotKind::kRunAhead) {
            order.emplace_back(static_cast<std::uint64_t>(occ.handle), s);
          }
        }
        std::sort(order.begin(), order.end());

        double tick_cost = 0.0;
        for (const auto& [id, s] : order) {
          const SlotOccupant occ = pool.slots()[s];
          if (occ.kind == SlotKind::kReal) {
            RealSequence& seq = real[static_cast<std::size_t>(occ.handle)];
            const StepOutcome out =
                seq.rollout.step(policy, drafting ? seq.tree : nullptr);
            tick_cost = std::max(tick_cost, config.cost.step_cost(out));
            if (on_the_fly) {
              stream_tokens(*seq.tree, seq.cursor, seq.rollout.last_emitted());
            }
            if (seq.rollout.done()) {
              seq.finish_tick = tick;
              pool.release(s);
              --remaining;
              if (srt && !on_the_fly) {
                seq.tree->insert_sequence(seq.rollout.record().tokens);
              }
            }
          } else {
            RunAheadSequence& seq = ahead.at(occ.handle);
            const StepOutcome out = seq.rollout.step(policy, seq.tree);
            tick_cost = std::max(tick_cost, config.cost.step_cost(out));
            stream_tokens(*seq.tree, seq.cursor, seq.rollout.last_emitted());
            report.run_ahead_tokens += out.emitted;
            if (seq.rollout.done()) {
              pool.release(s);
              ahead.erase(occ.handle);
            }
          }
        }
        ++tick;
        time += tick_cost;
      }
      // In-flight run-ahead sequences are dropped; their tokens stay cached.
      ahead.clear();

      std::vector<SequenceResult> step_rollouts;
      step_rollouts.reserve(real.size());
      std::map<std::size_t, PromptBreakdown> breakdown;
      for (RealSequence& seq : real) {
        const RolloutRecord& rec = seq.rollout.record();
        const Prompt& prompt = config.dataset[seq.prompt_index];
        const auto tokens = static_cast<std::int64_t>(rec.tokens.size());
        const auto steps = static_cast<std::int64_t>(seq.rollout.engine_steps());
        const std::int64_t accepted = rec.total_accepted();
        std::int64_t fallbacks = 0;
        for (const auto& s : rec.steps) fallbacks += s.used_fallback ? 1 : 0;

        report.tokens_total += tokens;
        report.engine_steps_total += steps;
        report.accepted_total += accepted;
        report.fallback_steps += fallbacks;
        report.max_length = std::max(report.max_length, tokens);

        PromptBreakdown& pb = breakdown[seq.prompt_index];
        pb.prompt_id = prompt.id;
        ++pb.sequences;
        pb.tokens += tokens;
        pb.engine_steps += steps;
        pb.accepted += accepted;
        pb.last_finish_tick = std::max(pb.last_finish_tick, seq.finish_tick + 1);

        step_rollouts.push_back(SequenceResult{prompt.id, seq.sample,
                                               seq.sequence_id,
                                               seq.rollout.take_record()});
      }
      report.sequences = static_cast<std::int64_t>(step_rollouts.size());
      report.mean_accepted =
          report.engine_steps_total > 0
              ? static_cast<double>(report.accepted_total) /
                    static_cast<double>(report.engine_steps_total)
              : 0.0;
      report.mean_length = report.sequences > 0
                               ? static_cast<double>(report.tokens_total) /
                                     static_cast<double>(report.sequences)
                               : 0.0;
      report.ticks = tick;
      report.simulated_time = time;
      report.rollout_digest = digest_rollouts(step_rollouts);
      for (auto& [idx, pb] : breakdown) report.per_prompt.push_back(pb);

      if (config.mode == SimulationMode::kHistoryOnly) {
        for (const auto& r : step_rollouts) {
          result.trees.at(r.prompt_id).insert_sequence(r.record.tokens);
        }
      }
      if (drafting && tree_config.decay != 1.0) {
        for (auto& [id, t] : result.trees) t.decay(tree_config.decay);
      }

      result.reports.push_back(std::move(report));
      result.rollouts.push_back(std::move(step_rollouts));

      if (policy.kind() == PolicyKind::kDriftingMarkov) {
        policy = drift_policy(policy, global_step);
      }
    }
  }
  return result;
}

}  // namespace srt
