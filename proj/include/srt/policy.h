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
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srt/rng.h"
#include "srt/tree_cache.h"

namespace srt {

enum class PolicyKind { kMarkov, kDriftingMarkov, kReplay };

std::string_view policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

// Parameters for a procedurally generated order-k Markov policy. Each row is
// a softmax over Gumbel noise scaled by `sharpness` (0 gives the uniform
// distribution), keyed by (seed, context); EOS mass is then pinned to
// `eos_prob` when it is non-negative.
struct MarkovOptions {
  PolicyKind kind = PolicyKind::kMarkov;
  std::int32_t vocab_size = 64;
  std::int32_t order = 1;
  double temperature = 1.0;
  TokenId eos_token = 0;
  double eos_prob = -1.0;
  double sharpness = 2.0;
  double drift_rate = 0.0;
  std::uint64_t seed = 0;
};

struct ReplayOptions {
  std::int32_t order = 1;
  // 0 infers max token + 1 from the corpus.
  std::int32_t vocab_size = 0;
  TokenId eos_token = 0;
  double temperature = 1.0;
};

// Immutable token-level policy: a dense conditional table indexed by the last
// `order` context tokens. Copies share the table.
class PolicySpec {
 public:
  // Empty policy with no table; only useful as a placeholder to assign to.
  PolicySpec() = default;

  static PolicySpec random_markov(const MarkovOptions& options);
  // `table` holds vocab_size^order rows of vocab_size probabilities.
  static PolicySpec from_table(PolicyKind kind, std::int32_t vocab_size,
                               std::int32_t order, std::vector<double> table,
                               TokenId eos_token, double temperature = 1.0,
                               double drift_rate = 0.0, std::uint64_t seed = 0);

  PolicyKind kind() const { return kind_; }
  std::int32_t vocab_size() const { return vocab_size_; }
  std::int32_t order() const { return order_; }
  double temperature() const { return temperature_; }
  TokenId eos_token() const { return eos_token_; }
  double eos_prob() const { return eos_prob_; }
  double sharpness() const { return sharpness_; }
  double drift_rate() const { return drift_rate_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t drift_steps() const { return drift_steps_; }

  std::size_t row_count() const;
  // Row key of the last `order` tokens; shorter contexts are left-padded
  // with the EOS token.
  std::uint64_t row_key(std::span<const TokenId> context) const;
  std::span<const double> row(std::uint64_t key) const;
  std::span<const double> table() const { return *table_; }

  // Conditional distribution after applying temperature. `out` must hold
  // vocab_size entries.
  void next_distribution(std::span<const TokenId> context,
                         std::span<double> out) const;
  std::vector<double> next_distribution(std::span<const TokenId> context) const;

  // Throws when any row is not a probability vector within 1e-9.
  void validate() const;

  std::string serialize() const;
  static PolicySpec deserialize(const std::string& text);

 private:
  friend PolicySpec drift_policy(const PolicySpec& policy, std::int64_t step);

  PolicyKind kind_ = PolicyKind::kMarkov;
  std::int32_t vocab_size_ = 0;
  std::int32_t order_ = 0;
  double temperature_ = 1.0;
  TokenId eos_token_ = 0;
  double eos_prob_ = -1.0;
  double sharpness_ = 0.0;
  double drift_rate_ = 0.0;
  std::uint64_t seed_ = 0;
  std::int64_t drift_steps_ = 0;
  std::shared_ptr<const std::vector<double>> table_;
};

inline constexpr double kMinTemperature = 1e-6;
inline constexpr double kDistributionTolerance = 1e-9;

// Inverse-CDF sampling in ascending token order: the smallest t with
// CDF(t) > u. Throws on a malformed distribution or u outside [0, 1).
TokenId sample_token(std::span<const double> dist, RngDraw u);

// Interpolates every row toward a perturbation row seeded by
// (seed, step, row key): p' = (1 - a) p + a g with a = drift_rate.
PolicySpec drift_policy(const PolicySpec& policy, std::int64_t step);

// Order-k add-one smoothed table estimated from a corpus file: one sequence
// per line of whitespace-separated token ids; '#' lines are comments.
PolicySpec replay_policy_from_corpus(const std::string& path,
                                     const ReplayOptions& options = {});
PolicySpec replay_policy_from_sequences(
    const std::vector<std::vector<TokenId>>& corpus,
    const ReplayOptions& options = {});
std::vector<std::vector<TokenId>> read_corpus(const std::string& path);
std::vector<std::vector<TokenId>> parse_corpus(std::string_view text);

}  // namespace srt
