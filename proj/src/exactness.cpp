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

#include "srt/exactness.h"

#include <algorithm>
#include <random>
#include <sstream>
#include <stdexcept>

#include "srt/rng.h"

namespace srt {

ExactnessTrial make_trial(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto uniform_real = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  ExactnessTrial t;
  t.trial_seed = seed;
  t.policy.vocab_size = uniform_int(32, 128);
  t.policy.order = uniform_int(0, 2);
  t.policy.seed = rng();
  t.policy.sharpness = uniform_real(0.0, 6.0);
  t.policy.temperature = uniform_int(0, 3) == 0 ? uniform_real(0.3, 1.5) : 1.0;
  t.policy.eos_token = uniform_int(0, t.policy.vocab_size - 1);
  t.policy.eos_prob = uniform_int(0, 3) == 0 ? -1.0 : uniform_real(0.0, 0.05);

  t.tree.vocab_size = t.policy.vocab_size;
  t.tree.max_depth = uniform_int(2, 16);
  t.tree.max_match_len = uniform_int(1, t.tree.max_depth);
  t.tree.budget_base = uniform_int(1, 8);
  t.tree.budget_slope = uniform_real(0.0, 3.0);
  t.tree.budget_max = uniform_int(t.tree.budget_base, 32);
  // Small capacities exercise eviction mid-decode.
  t.tree.max_nodes = uniform_int(0, 3) == 0 ? uniform_int(8, 200) : 1 << 16;
  t.tree.insert_mode =
      uniform_int(0, 4) == 0 ? InsertMode::kRootPathOnly : InsertMode::kAllSuffixes;
  t.prior_rollouts = uniform_int(0, 6);
  t.prior_seed = rng();

  t.prompt.resize(static_cast<std::size_t>(uniform_int(0, 8)));
  for (auto& tok : t.prompt) tok = uniform_int(0, t.policy.vocab_size - 1);
  t.params.max_new_tokens = uniform_int(1, 256);
  t.params.seed = rng();
  t.params.sequence_id = rng();
  return t;
}

RolloutTree build_trial_tree(const ExactnessTrial& t, const PolicySpec& policy) {
  RolloutTree tree("trial", t.tree);
  for (std::int32_t i = 0; i < t.prior_rollouts; ++i) {
    GenerationParams g;
    g.max_new_tokens = 256;
    g.seed = t.prior_seed;
    g.sequence_id = static_cast<std::uint64_t>(i);
    g.collect_metrics = false;
    tree.insert_sequence(baseline_generate(policy, t.prompt, g).tokens);
  }
  return tree;
}

TrialOutcome run_trial(const ExactnessTrial& t, RngKeying keying) {
  const PolicySpec policy = PolicySpec::random_markov(t.policy);
  const RolloutTree tree = build_trial_tree(t, policy);
  GenerationParams params = t.params;
  const RolloutRecord base = baseline_generate(policy, t.prompt, params);
  params.keying = keying;
  const RolloutRecord spec = speculative_generate(policy, t.prompt, tree, params);

  TrialOutcome out;
  out.identical = base.tokens == spec.tokens;
  if (!out.identical) {
    const auto mismatch =
        std::mismatch(base.tokens.begin(), base.tokens.end(), spec.tokens.begin(),
                      spec.tokens.end());
    out.first_divergence = mismatch.first - base.tokens.begin();
  }
  out.base_steps = base.steps.size();
  out.spec_steps = spec.steps.size();
  out.accepted = spec.total_accepted();

  std::int64_t emitted = 0;
  bool ok = true;
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    const StepOutcome& s = spec.steps[i];
    emitted += s.emitted;
    if (s.emitted > 1) ++out.multi_token_steps;
    ok = ok && s.accepted >= 0 && s.accepted <= s.drafted && s.emitted >= 1;
    // Only the last step may lose its bonus token to EOS or the length cap.
    if (i + 1 < spec.steps.size()) ok = ok && s.emitted == s.accepted + 1;
    if (s.used_fallback) ok = ok && s.emitted == 1 && s.drafted == 0;
  }
  out.accounting_ok = ok && emitted == static_cast<std::int64_t>(spec.tokens.size()) &&
                      static_cast<std::int32_t>(spec.tokens.size()) <= t.params.max_new_tokens &&
                      out.spec_steps <= out.base_steps;
  return out;
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::int64_t index) {
  return hash_words({base_seed, static_cast<std::uint64_t>(index), 0xE4AC7ULL});
}

ExactnessSummary verify_exactness(std::int64_t trials, std::uint64_t base_seed,
                                  RngKeying keying) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  ExactnessSummary s;
  for (std::int64_t i = 0; i < trials; ++i) {
    const std::uint64_t seed = trial_seed(base_seed, i);
    const TrialOutcome o = run_trial(make_trial(seed), keying);
    ++s.trials;
    if (o.identical) ++s.identical;
    if (!o.accounting_ok) ++s.accounting_failures;
    s.total_accepted += o.accepted;
    if ((!o.identical || !o.accounting_ok) && !s.first_failure) {
      s.first_failure = i;
      s.first_failure_seed = seed;
      s.first_failure_position = o.first_divergence;
    }
  }
  return s;
}

std::string describe_trial(const ExactnessTrial& t) {
  std::ostringstream out;
  out << "trial_seed=" << t.trial_seed << " policy_seed=" << t.policy.seed
      << " generation_seed=" << t.params.seed << " sequence_id=" << t.params.sequence_id
      << " vocab=" << t.policy.vocab_size << " order=" << t.policy.order
      << " prompt_len=" << t.prompt.size() << " prior_rollouts=" << t.prior_rollouts
      << " max_new_tokens=" << t.params.max_new_tokens;
  return out.str();
}

}  // namespace srt
