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

#include <sstream>

#include "srt/engine.h"
#include "srt/exactness.h"

namespace srt {
namespace {

// Order-1 table where each token deterministically maps to next[token].
PolicySpec cycle_policy(const std::vector<TokenId>& next, TokenId eos) {
  const auto v = static_cast<std::int32_t>(next.size());
  std::vector<double> table(next.size() * next.size(), 0.0);
  for (std::size_t r = 0; r < next.size(); ++r) {
    table[r * next.size() + static_cast<std::size_t>(next[r])] = 1.0;
  }
  return PolicySpec::from_table(PolicyKind::kMarkov, v, 1, table, eos);
}

GenerationParams params_with(std::int32_t max_new, std::uint64_t seed = 1,
                             std::uint64_t seq = 0) {
  GenerationParams p;
  p.max_new_tokens = max_new;
  p.seed = seed;
  p.sequence_id = seq;
  return p;
}

// Independent restatement of the documented draw derivation.
double reference_draw(std::uint64_t seed, std::uint64_t seq, std::uint64_t pos) {
  auto splitmix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  const std::uint64_t key = seed ^ splitmix(seq);
  const std::uint64_t bits = splitmix(key + (pos + 1) * 0x9E3779B97F4A7C15ULL);
  return static_cast<double>(bits >> 11) / 9007199254740992.0;
}

TEST_CASE("baseline follows a deterministic policy to EOS") {
  // pad(0) -> 1 -> 2 -> 0
  const PolicySpec p = cycle_policy({1, 2, 0}, 0);
  const RolloutRecord r = baseline_generate(p, std::vector<TokenId>{}, params_with(10));
  CHECK(r.tokens == std::vector<TokenId>{1, 2, 0});
  CHECK(r.terminated_by == Termination::kEos);
  REQUIRE(r.steps.size() == 3);
  for (const auto& s : r.steps) {
    CHECK(s.drafted == 0);
    CHECK(s.emitted == 1);
  }
}

TEST_CASE("length cap of one emits one token") {
  const PolicySpec p = cycle_policy({1, 2, 0}, 0);
  const RolloutRecord r = baseline_generate(p, std::vector<TokenId>{}, params_with(1));
  CHECK(r.tokens.size() == 1);
  CHECK(r.terminated_by == Termination::kLength);
  CHECK_THROWS_AS(baseline_generate(p, std::vector<TokenId>{}, params_with(0)),
                  std::invalid_argument);
}

TEST_CASE("uniform policy samples equal hand-evaluated inverse-CDF bins") {
  MarkovOptions opts;
  opts.vocab_size = 4;
  opts.sharpness = 0.0;
  opts.eos_token = 3;
  const PolicySpec p = PolicySpec::random_markov(opts);
  const std::uint64_t seed = 2024, seq = 17;
  const RolloutRecord r =
      baseline_generate(p, std::vector<TokenId>{0}, params_with(5, seed, seq));
  std::vector<TokenId> expected;
  for (std::uint64_t t = 0; t < 5; ++t) {
    // CDF = (.25, .5, .75, 1): the bin is floor(4u).
    const auto tok = static_cast<TokenId>(reference_draw(seed, seq, t) * 4.0);
    expected.push_back(tok);
    if (tok == 3) break;
  }
  CHECK(r.tokens == expected);
  CHECK(baseline_generate(p, std::vector<TokenId>{0}, params_with(5, seed, seq)).tokens ==
        r.tokens);
}

TEST_CASE("empty tree decodes exactly like the baseline") {
  MarkovOptions opts;
  opts.vocab_size = 32;
  opts.order = 2;
  opts.seed = 3;
  opts.eos_prob = 0.05;
  const PolicySpec p = PolicySpec::random_markov(opts);
  TreeConfig cfg;
  cfg.vocab_size = 32;
  const RolloutTree tree("p", cfg);
  const std::vector<TokenId> prompt{4, 5, 6};
  const auto base = baseline_generate(p, prompt, params_with(64, 9, 2));
  const auto spec = speculative_generate(p, prompt, tree, params_with(64, 9, 2));
  CHECK(spec.tokens == base.tokens);
  for (const auto& s : spec.steps) {
    CHECK(s.used_fallback);
    CHECK(s.emitted == 1);
  }
}

TEST_CASE("a perfect draft is accepted in one engine step") {
  // pad(0) -> 1 -> 2 -> ... -> 6 -> 0
  const PolicySpec p = cycle_policy({1, 2, 3, 4, 5, 6, 0}, 0);
  const auto base = baseline_generate(p, std::vector<TokenId>{}, params_with(50));
  REQUIRE(base.tokens == std::vector<TokenId>{1, 2, 3, 4, 5, 6, 0});
  TreeConfig cfg;
  cfg.vocab_size = 7;
  RolloutTree tree("p", cfg);
  tree.insert_sequence(base.tokens);
  const auto spec = speculative_generate(p, std::vector<TokenId>{}, tree, params_with(50));
  CHECK(spec.tokens == base.tokens);
  // Nothing to match before the first token, then the whole chain at once.
  REQUIRE(spec.steps.size() == 2);
  CHECK(spec.steps[0].used_fallback);
  CHECK(spec.steps[1].drafted == 6);
  CHECK(spec.steps[1].accepted == 6);
  CHECK(spec.steps[1].emitted == 6);
  CHECK(spec.terminated_by == Termination::kEos);
}

TEST_CASE("verify_draft accepts a matching chain and adds the next token") {
  const PolicySpec p = cycle_policy({1, 2, 3, 4, 0}, 0);
  DraftTree draft;
  draft.nodes = {{2, -1, 1, 1.0, {}}, {3, 0, 2, 1.0, {}}};
  const auto r = verify_draft(p, std::vector<TokenId>{1}, draft, 1, params_with(20));
  CHECK(r.accepted == std::vector<TokenId>{2, 3});
  REQUIRE(r.bonus.has_value());
  CHECK(*r.bonus == 4);
}

TEST_CASE("verify_draft with a wrong first token returns only the bonus") {
  const PolicySpec p = cycle_policy({1, 2, 3, 4, 0}, 0);
  DraftTree draft;
  draft.nodes = {{3, -1, 1, 1.0, {}}, {4, -1, 1, 1.0, {}}};
  const auto r = verify_draft(p, std::vector<TokenId>{1}, draft, 1, params_with(20));
  CHECK(r.accepted.empty());
  REQUIRE(r.bonus.has_value());
  CHECK(*r.bonus == 2);
  CHECK_THROWS_AS(verify_draft(p, std::vector<TokenId>{1}, DraftTree{}, 1, params_with(20)),
                  std::invalid_argument);
}

TEST_CASE("verify_draft descends the branch the sample selects") {
  // Order 0, dist (0, .5, .5): u < .5 picks token 1, otherwise token 2.
  const PolicySpec p =
      PolicySpec::from_table(PolicyKind::kMarkov, 3, 0, {0.0, 0.5, 0.5}, 0);
  DraftTree draft;
  draft.nodes = {{1, -1, 1, 0.5, {}}, {2, -1, 1, 0.5, {}}, {1, 1, 2, 0.25, {}}};
  // Find a seed whose draw at position 0 lands in the second half and at
  // position 1 in the first.
  std::uint64_t seed = 0;
  while (!(reference_draw(seed, 0, 0) >= 0.5 && reference_draw(seed, 0, 1) < 0.5)) ++seed;
  const auto r = verify_draft(p, std::vector<TokenId>{}, draft, 0, params_with(20, seed));
  CHECK(r.accepted == std::vector<TokenId>{2, 1});
  REQUIRE(r.bonus.has_value());
  CHECK(*r.bonus == (reference_draw(seed, 0, 2) < 0.5 ? 1 : 2));
}

TEST_CASE("speculative output equals baseline on random trials") {
  for (int i = 0; i < 200; ++i) {
    const ExactnessTrial trial = make_trial(trial_seed(8, i));
    const TrialOutcome out = run_trial(trial);
    CHECK_MESSAGE(out.identical, "trial ", i);
    CHECK(out.spec_steps <= out.base_steps);
    // Equal only when no step emitted more than one token; an accepted
    // token that ends the sequence stands in for the bonus.
    CHECK((out.spec_steps == out.base_steps) == (out.multi_token_steps == 0));
    CHECK(out.accounting_ok);
  }
}

TEST_CASE("corrupted rng keying breaks exactness") {
  int divergent = 0;
  for (int i = 0; i < 200; ++i) {
    const ExactnessTrial trial = make_trial(trial_seed(8, i));
    if (!run_trial(trial, RngKeying::kCorruptStepIndex).identical) ++divergent;
  }
  CHECK(divergent > 0);
  const ExactnessSummary s = verify_exactness(200, 8, RngKeying::kCorruptStepIndex);
  CHECK_FALSE(s.ok());
  REQUIRE(s.first_failure_seed.has_value());
  // The reported seed alone reproduces the divergence.
  CHECK_FALSE(run_trial(make_trial(*s.first_failure_seed),
                        RngKeying::kCorruptStepIndex).identical);
}

TEST_CASE("exactness batches are deterministic and validated") {
  const ExactnessSummary a = verify_exactness(20, 3);
  CHECK(a.ok());
  CHECK(a.trials == 20);
  CHECK(verify_exactness(20, 3).total_accepted == a.total_accepted);
  CHECK(describe_trial(make_trial(5)) == describe_trial(make_trial(5)));
  CHECK_THROWS_AS(verify_exactness(0, 3), std::invalid_argument);
}

TEST_CASE("collect_metrics off keeps no step list") {
  const PolicySpec p = cycle_policy({1, 2, 0}, 0);
  GenerationParams g = params_with(10);
  g.collect_metrics = false;
  const auto r = baseline_generate(p, std::vector<TokenId>{}, g);
  CHECK(r.tokens.size() == 3);
  CHECK(r.steps.empty());
}

TEST_CASE("rollouts refuse to step after finishing") {
  const PolicySpec p = cycle_policy({1, 2, 0}, 0);
  Rollout r(std::vector<TokenId>{}, params_with(2));
  r.step(p, nullptr);
  r.step(p, nullptr);
  CHECK(r.done());
  CHECK(r.engine_steps() == 2);
  CHECK_THROWS_AS(r.step(p, nullptr), std::logic_error);
}

TEST_CASE("step trace is one JSON object per step") {
  const PolicySpec p = cycle_policy({1, 2, 0}, 0);
  const auto r = baseline_generate(p, std::vector<TokenId>{}, params_with(10));
  std::ostringstream out;
  write_step_trace(out, r);
  CHECK(out.str() ==
        "{\"step\":0,\"q\":0,\"drafted\":0,\"accepted\":0,\"used_fallback\":true}\n"
        "{\"step\":1,\"q\":0,\"drafted\":0,\"accepted\":0,\"used_fallback\":true}\n"
        "{\"step\":2,\"q\":0,\"drafted\":0,\"accepted\":0,\"used_fallback\":true}\n");
}

TEST_CASE("unit step cost model") {
  CostModel c;
  StepOutcome s;
  s.drafted = 10;
  CHECK(c.step_cost(s) == 1.0);
  c.draft_token_surcharge = 0.1;
  CHECK(c.step_cost(s) == doctest::Approx(2.0));
}

}  // namespace
}  // namespace srt
