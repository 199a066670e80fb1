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
#include <functional>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "srt/analytics.h"
#include "srt/config.h"
#include "srt/scheduler.h"

namespace srt {
namespace {

SimulationConfig small_config(SimulationMode mode) {
  MarkovOptions m;
  m.kind = PolicyKind::kDriftingMarkov;
  m.vocab_size = 16;
  m.order = 1;
  m.eos_prob = 0.05;
  m.sharpness = 3.0;
  m.drift_rate = 0.05;
  m.seed = 5;
  SimulationConfig c;
  c.policy = PolicySpec::random_markov(m);
  c.dataset = synthetic_prompts(8, 4, 16, 0, 1);
  c.train_batch_size = 4;
  c.samples_per_prompt = 3;
  c.epochs = 2;
  c.batch_slots = 6;
  c.max_new_tokens = 64;
  c.seed = 9;
  c.mode = mode;
  return c;
}

std::vector<std::vector<TokenId>> all_tokens(const SimulationResult& r) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& step : r.rollouts) {
    for (const auto& s : step) out.push_back(s.record.tokens);
  }
  return out;
}

// Makespan of FIFO list scheduling: each job takes the earliest free slot.
std::int64_t list_makespan(const std::vector<std::int64_t>& lengths,
                           std::int32_t slots) {
  std::priority_queue<std::int64_t, std::vector<std::int64_t>, std::greater<>> free_at;
  for (std::int32_t i = 0; i < slots; ++i) free_at.push(0);
  std::int64_t makespan = 0;
  for (std::int64_t len : lengths) {
    const std::int64_t start = free_at.top();
    free_at.pop();
    free_at.push(start + len);
    makespan = std::max(makespan, start + len);
  }
  return makespan;
}

TEST_CASE("mode names round-trip") {
  for (auto m : {SimulationMode::kBaseline, SimulationMode::kHistoryOnly, SimulationMode::kSrt}) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_mode("turbo"), std::invalid_argument);
}

TEST_CASE("config validation") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  CHECK_NOTHROW(c.validate());
  auto broken = c;
  broken.samples_per_prompt = 0;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.dataset.push_back(broken.dataset.front());
  CHECK_THROWS_WITH_AS(broken.validate(), doctest::Contains("duplicate"),
                       std::invalid_argument);
  broken = c;
  broken.dataset[0].tokens.push_back(99);
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.lookahead_window = -2;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.dataset.clear();
  CHECK_THROWS_AS(run_simulation(broken), std::invalid_argument);
  CHECK(c.steps_per_epoch() == 2);
  CHECK(c.effective_lookahead() == 4);
}

TEST_CASE("baseline time is the list-scheduling makespan") {
  SimulationConfig c = small_config(SimulationMode::kBaseline);
  for (std::int32_t slots : {1, 3, 6, 40}) {
    c.batch_slots = slots;
    const SimulationResult r = run_simulation(c);
    for (std::size_t s = 0; s < r.reports.size(); ++s) {
      std::vector<std::int64_t> lengths;
      for (const auto& seq : r.rollouts[s]) {
        lengths.push_back(static_cast<std::int64_t>(seq.record.tokens.size()));
      }
      CHECK(r.reports[s].ticks == list_makespan(lengths, slots));
      CHECK(r.reports[s].simulated_time == static_cast<double>(r.reports[s].ticks));
      CHECK(r.reports[s].accepted_total == 0);
      CHECK(r.reports[s].mean_accepted == 0.0);
      CHECK(r.reports[s].engine_steps_total == r.reports[s].tokens_total);
    }
  }
}

TEST_CASE("training rollouts are identical across modes") {
  const SimulationResult base = run_simulation(small_config(SimulationMode::kBaseline));
  const SimulationResult hist = run_simulation(small_config(SimulationMode::kHistoryOnly));
  SimulationConfig srt_cfg = small_config(SimulationMode::kSrt);
  const SimulationResult srt_plain = run_simulation(srt_cfg);
  srt_cfg.run_ahead = true;
  const SimulationResult srt_ahead = run_simulation(srt_cfg);
  srt_cfg.on_the_fly_updates = false;
  const SimulationResult srt_offline = run_simulation(srt_cfg);
  for (const SimulationResult* r : {&hist, &srt_plain, &srt_ahead, &srt_offline}) {
    CHECK(all_tokens(*r) == all_tokens(base));
    for (std::size_t s = 0; s < base.reports.size(); ++s) {
      CHECK(r->reports[s].rollout_digest == base.reports[s].rollout_digest);
      CHECK(r->reports[s].simulated_time <= base.reports[s].simulated_time);
      CHECK(r->reports[s].engine_steps_total <= base.reports[s].engine_steps_total);
    }
  }
  CHECK(srt_ahead.reports.back().run_ahead_sequences > 0);
}

TEST_CASE("run-ahead sequences never surface as training data") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  c.run_ahead = true;
  const SimulationResult r = run_simulation(c);
  REQUIRE_FALSE(r.run_ahead_ids.empty());
  std::set<std::uint64_t> ahead(r.run_ahead_ids.begin(), r.run_ahead_ids.end());
  CHECK(ahead.size() == r.run_ahead_ids.size());
  for (const auto& step : r.rollouts) {
    for (const auto& s : step) {
      CHECK(ahead.count(s.sequence_id) == 0);
      CHECK((s.sequence_id & kRunAheadIdTag) == 0);
    }
  }
}

TEST_CASE("history-only caches learn nothing within a step") {
  const SimulationResult r = run_simulation(small_config(SimulationMode::kHistoryOnly));
  // Every prompt is new in epoch 0.
  CHECK(r.reports[0].accepted_total == 0);
  CHECK(r.reports[1].accepted_total == 0);
}

TEST_CASE("online updates help siblings within the first step") {
  const SimulationResult r = run_simulation(small_config(SimulationMode::kSrt));
  CHECK(r.reports[0].accepted_total > 0);
}

TEST_CASE("a frozen deterministic policy is replayed from the cache") {
  // Order-1 one-hot policy that walks 1..30 then emits EOS.
  const std::int32_t v = 32;
  std::vector<double> table(static_cast<std::size_t>(v * v), 0.0);
  for (std::int32_t r = 0; r < v; ++r) {
    const std::int32_t next = r == 0 ? 1 : (r + 1 < 31 ? r + 1 : 0);
    table[static_cast<std::size_t>(r * v + next)] = 1.0;
  }
  SimulationConfig c;
  c.policy = PolicySpec::from_table(PolicyKind::kMarkov, v, 1, table, 0);
  c.dataset = {Prompt{"a", {0}}, Prompt{"b", {0}}};
  c.train_batch_size = 2;
  c.samples_per_prompt = 1;
  c.epochs = 2;
  c.batch_slots = 4;
  c.max_new_tokens = 100;
  c.tree.budget_max = 32;
  c.tree.budget_base = 32;
  c.mode = SimulationMode::kBaseline;
  const SimulationResult base = run_simulation(c);
  c.mode = SimulationMode::kSrt;
  const SimulationResult srt = run_simulation(c);
  CHECK(all_tokens(srt) == all_tokens(base));
  const StepReport& warm = srt.reports[1];
  CHECK(warm.tokens_total == 62);
  CHECK(warm.engine_steps_total < base.reports[1].engine_steps_total);
  // Each length-30 rollout: one step to reach a match, then chains of at
  // most max_depth - q accepted tokens plus a bonus.
  for (const auto& pb : warm.per_prompt) CHECK(pb.engine_steps <= 4);
}

TEST_CASE("run-ahead needs staggered completions") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  MarkovOptions m;
  m.vocab_size = 256;
  m.sharpness = 0.0;
  m.eos_prob = 0.0;
  m.seed = 2;
  c.policy = PolicySpec::random_markov(m);
  c.dataset = synthetic_prompts(8, 4, 256, 0, 1);
  c.run_ahead = true;
  c.batch_slots = 12;

  // One-token rollouts all finish on the first tick.
  c.max_new_tokens = 1;
  for (const auto& rep : run_simulation(c).reports) CHECK(rep.run_ahead_tokens == 0);

  // Equal token lengths and near-zero acceptance: completions are almost
  // simultaneous, so run-ahead has almost nothing to fill.
  c.max_new_tokens = 32;
  std::int64_t ahead = 0, trained = 0;
  for (const auto& rep : run_simulation(c).reports) {
    ahead += rep.run_ahead_tokens;
    trained += rep.tokens_total;
  }
  CHECK(static_cast<double>(ahead) < 0.02 * static_cast<double>(trained));

  // Long-tailed lengths leave plenty of idle slots.
  m.vocab_size = 16;
  m.sharpness = 2.0;
  m.eos_prob = 0.1;
  c.policy = PolicySpec::random_markov(m);
  c.dataset = synthetic_prompts(8, 4, 16, 0, 1);
  c.max_new_tokens = 128;
  ahead = 0;
  for (const auto& rep : run_simulation(c).reports) ahead += rep.run_ahead_tokens;
  CHECK(ahead > 0);
}

TEST_CASE("full trees are skipped by run-ahead") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  c.run_ahead = true;
  c.tree.max_nodes = 16;
  c.tree.max_depth = 4;
  c.tree.max_match_len = 4;
  c.run_ahead_fullness = 0.0625;  // one node: only empty trees qualify
  const SimulationResult r = run_simulation(c);
  // Once every lookahead tree holds a node, run-ahead stops launching.
  CHECK(r.reports.back().run_ahead_sequences == 0);
  for (const auto& [id, t] : r.trees) CHECK(t.check_invariants().empty());
}

TEST_CASE("zero lookahead disables run-ahead") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  c.run_ahead = true;
  c.lookahead_window = 0;
  const SimulationResult r = run_simulation(c);
  CHECK(r.run_ahead_ids.empty());
}

TEST_CASE("identical configs give identical reports") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  c.run_ahead = true;
  std::ostringstream a, b;
  write_reports_jsonl(a, run_simulation(c).reports, "srt");
  write_reports_jsonl(b, run_simulation(c).reports, "srt");
  CHECK(a.str() == b.str());
  CHECK_FALSE(a.str().empty());
}

TEST_CASE("mean accepted is accepted over engine steps") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  c.run_ahead = true;
  const SimulationResult r = run_simulation(c);
  for (std::size_t s = 0; s < r.reports.size(); ++s) {
    const StepReport& rep = r.reports[s];
    std::int64_t emitted = 0, steps = 0, accepted = 0;
    for (const auto& seq : r.rollouts[s]) {
      for (const auto& o : seq.record.steps) {
        emitted += o.emitted;
        accepted += o.accepted;
      }
      steps += static_cast<std::int64_t>(seq.record.steps.size());
    }
    CHECK(emitted == rep.tokens_total);
    CHECK(steps == rep.engine_steps_total);
    CHECK(accepted == rep.accepted_total);
    CHECK(rep.mean_accepted ==
          doctest::Approx(static_cast<double>(accepted) / static_cast<double>(steps)));
    std::int64_t pp_tokens = 0;
    for (const auto& pb : rep.per_prompt) pp_tokens += pb.tokens;
    CHECK(pp_tokens == rep.tokens_total);
  }
}

TEST_CASE("decay keeps trees consistent") {
  SimulationConfig c = small_config(SimulationMode::kSrt);
  c.tree.decay = 0.5;
  const SimulationResult r = run_simulation(c);
  for (const auto& [id, t] : r.trees) CHECK(t.check_invariants().empty());
  CHECK(all_tokens(r) == all_tokens(run_simulation(small_config(SimulationMode::kBaseline))));
}

TEST_CASE("detect_bubbles counts slots without a training rollout") {
  std::vector<SlotOccupant> slots(8, SlotOccupant{SlotKind::kReal, 0});
  CHECK(detect_bubbles(slots).empty());
  slots[1] = SlotOccupant{};
  slots[4] = SlotOccupant{};
  slots[6] = SlotOccupant{SlotKind::kRunAhead, 9};
  CHECK(detect_bubbles(slots) == std::vector<std::size_t>{1, 4, 6});
}

TEST_CASE("waiting training rollouts preempt run-ahead occupants") {
  SlotPool pool(3);
  pool.enqueue_real(0);
  pool.enqueue_real(1);
  CHECK(pool.fill_real().empty());
  CHECK(pool.free() == 1);
  pool.place_run_ahead(2, 100);
  CHECK_THROWS_AS(pool.place_run_ahead(2, 101), std::logic_error);
  CHECK(pool.busy() + pool.free() == 3);

  // Slot 0 frees; two more training rollouts arrive.
  pool.release(0);
  pool.enqueue_real(2);
  pool.enqueue_real(3);
  const auto displaced = pool.fill_real();
  CHECK(displaced == std::vector<std::int64_t>{100});
  CHECK(pool.slots()[0].kind == SlotKind::kReal);
  CHECK(pool.slots()[0].handle == 2);
  CHECK(pool.slots()[2].kind == SlotKind::kReal);
  CHECK(pool.slots()[2].handle == 3);
  CHECK(pool.queued() == 0);
}

TEST_CASE("slot pool conserves slots under random operations") {
  std::mt19937_64 rng(1);
  SlotPool pool(5);
  std::int64_t next = 0;
  for (int i = 0; i < 2000; ++i) {
    const int op = std::uniform_int_distribution<int>(0, 3)(rng);
    if (op == 0) pool.enqueue_real(next++);
    if (op == 1) pool.fill_real();
    if (op == 2) pool.release(std::uniform_int_distribution<std::size_t>(0, 4)(rng));
    if (op == 3) {
      for (std::size_t s = 0; s < 5; ++s) {
        if (pool.slots()[s].kind == SlotKind::kFree) {
          pool.place_run_ahead(s, next++);
          break;
        }
      }
    }
    CHECK(pool.busy() + pool.free() == 5);
  }
}

TEST_CASE("length histogram accounting") {
  SimulationConfig c = small_config(SimulationMode::kBaseline);
  const SimulationResult r = run_simulation(c);
  const auto h = length_histogram(r.rollouts[0], 8, c.max_new_tokens);
  std::int64_t total = 0;
  for (auto x : h) total += x;
  CHECK(total == static_cast<std::int64_t>(r.rollouts[0].size()));
  CHECK_THROWS_AS(length_histogram(r.rollouts[0], 0, 10), std::invalid_argument);
}

TEST_CASE("no EOS mass means every rollout hits the cap") {
  SimulationConfig c = small_config(SimulationMode::kBaseline);
  MarkovOptions m;
  m.vocab_size = 16;
  m.eos_prob = 0.0;
  c.policy = PolicySpec::random_markov(m);
  const SimulationResult r = run_simulation(c);
  const auto h = length_histogram(r.rollouts[0], 8, c.max_new_tokens);
  CHECK(h.back() == static_cast<std::int64_t>(r.rollouts[0].size()));
}

TEST_CASE("order-0 EOS probability gives geometric lengths") {
  const double p = 0.05;
  MarkovOptions m;
  m.vocab_size = 16;
  m.eos_prob = p;
  SimulationConfig c;
  c.policy = PolicySpec::random_markov(m);
  c.dataset = synthetic_prompts(50, 2, 16, 0, 3);
  c.train_batch_size = 50;
  c.samples_per_prompt = 40;
  c.batch_slots = 256;
  c.max_new_tokens = 1000;
  c.mode = SimulationMode::kBaseline;
  const SimulationResult r = run_simulation(c);
  // Lengths count the EOS token, so they follow Geometric(p) on {1, 2, ...}
  // truncated at 1000: mean 1/p, variance (1-p)/p^2.
  const double n = static_cast<double>(r.reports[0].sequences);
  const double mean = r.reports[0].mean_length;
  const double sd = std::sqrt((1.0 - p) / (p * p));
  CHECK(std::abs(mean - 1.0 / p) < 4.0 * sd / std::sqrt(n));
  double var = 0.0;
  for (const auto& s : r.rollouts[0]) {
    const double d = static_cast<double>(s.record.tokens.size()) - mean;
    var += d * d;
  }
  var /= n - 1.0;
  CHECK(var == doctest::Approx(sd * sd).epsilon(0.1));
}

}  // namespace
}  // namespace srt
