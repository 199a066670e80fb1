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

#include "srt/policy.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "text_util.h"

namespace srt {

namespace {

constexpr std::size_t kMaxTableEntries = std::size_t{1} << 26;
constexpr std::uint64_t kDriftTag = 0xD21F7ULL;
constexpr char kPolicyMagic[] = "srt-policy";
constexpr int kPolicyVersion = 1;

std::size_t checked_row_count(std::int32_t vocab_size, std::int32_t order) {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (order < 0) throw std::invalid_argument("order must be >= 0");
  std::size_t rows = 1;
  for (std::int32_t i = 0; i < order; ++i) {
    rows *= static_cast<std::size_t>(vocab_size);
    if (rows * static_cast<std::size_t>(vocab_size) > kMaxTableEntries) {
      throw std::invalid_argument(
          "policy table too large: vocab_size^(order+1) exceeds 2^26");
    }
  }
  return rows;
}

// Softmax of sharpness-scaled Gumbel noise, then EOS mass pinned.
void fill_random_row(std::uint64_t seed, std::uint64_t row_key,
                     double sharpness, TokenId eos_token, double eos_prob,
                     std::span<double> out) {
  const std::size_t vocab = out.size();
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vocab; ++i) {
    const std::uint64_t bits = hash_words({seed, row_key, i});
    const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    const double gumbel = -std::log(-std::log(u));
    out[i] = sharpness * gumbel;
    top = std::max(top, out[i]);
  }
  double total = 0.0;
  double others = 0.0;
  for (std::size_t i = 0; i < vocab; ++i) {
    out[i] = std::exp(out[i] - top);
    total += out[i];
    if (static_cast<TokenId>(i) != eos_token) others += out[i];
  }
  if (eos_prob < 0.0) {
    for (double& v : out) v /= total;
    return;
  }
  // Rescale the non-EOS entries from their own sum; 1 - p(eos) would lose
  // precision when EOS dominates the row.
  for (std::size_t i = 0; i < vocab; ++i) {
    out[i] = others > 0.0 ? out[i] * (1.0 - eos_prob) / others
                          : (1.0 - eos_prob) / static_cast<double>(vocab - 1);
  }
  out[static_cast<std::size_t>(eos_token)] = eos_prob;
}

}  // namespace

std::string_view policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kMarkov:
      return "markov";
    case PolicyKind::kDriftingMarkov:
      return "drifting_markov";
    case PolicyKind::kReplay:
      return "replay";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "markov") return PolicyKind::kMarkov;
  if (name == "drifting_markov") return PolicyKind::kDriftingMarkov;
  if (name == "replay") return PolicyKind::kReplay;
  throw std::invalid_argument("unknown policy kind '" + std::string(name) + "'");
}

PolicySpec PolicySpec::random_markov(const MarkovOptions& options) {
  const std::size_t rows = checked_row_count(options.vocab_size, options.order);
  if (options.eos_token < 0 || options.eos_token >= options.vocab_size) {
    throw std::invalid_argument("eos_token outside vocabulary");
  }
  if (options.eos_prob > 1.0) throw std::invalid_argument("eos_prob > 1");
  if (!(options.sharpness >= 0.0)) {
    throw std::invalid_argument("sharpness must be >= 0");
  }
  if (!(options.temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (!(options.drift_rate >= 0.0 && options.drift_rate <= 1.0)) {
    throw std::invalid_argument("drift_rate must lie in [0, 1]");
  }
  if (options.kind == PolicyKind::kReplay) {
    throw std::invalid_argument("replay policies are built from a corpus");
  }

  const auto vocab = static_cast<std::size_t>(options.vocab_size);
  auto table = std::make_shared<std::vector<double>>(rows * vocab);
  for (std::size_t r = 0; r < rows; ++r) {
    fill_random_row(options.seed, r, options.sharpness, options.eos_token,
                    options.eos_prob,
                    std::span<double>(table->data() + r * vocab, vocab));
  }

  PolicySpec policy;
  policy.kind_ = options.kind;
  policy.vocab_size_ = options.vocab_size;
  policy.order_ = options.order;
  policy.temperature_ = options.temperature;
  policy.eos_token_ = options.eos_token;
  policy.eos_prob_ = options.eos_prob;
  policy.sharpness_ = options.sharpness;
  policy.drift_rate_ = options.drift_rate;
  policy.seed_ = options.seed;
  policy.table_ = std::move(table);
  return policy;
}

PolicySpec PolicySpec::from_table(PolicyKind kind, std::int32_t vocab_size,
                                  std::int32_t order, std::vector<double> table,
                                  TokenId eos_token, double temperature,
                                  double drift_rate, std::uint64_t seed) {
  const std::size_t rows = checked_row_count(vocab_size, order);
  if (table.size() != rows * static_cast<std::size_t>(vocab_size)) {
    throw std::invalid_argument("policy table has " +
                                std::to_string(table.size()) +
                                " entries, expected " +
                                std::to_string(rows * vocab_size));
  }
  if (eos_token < 0 || eos_token >= vocab_size) {
    throw std::invalid_argument("eos_token outside vocabulary");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (!(drift_rate >= 0.0 && drift_rate <= 1.0)) {
    throw std::invalid_argument("drift_rate must lie in [0, 1]");
  }
  PolicySpec policy;
  policy.kind_ = kind;
  policy.vocab_size_ = vocab_size;
  policy.order_ = order;
  policy.temperature_ = temperature;
  policy.eos_token_ = eos_token;
  policy.drift_rate_ = drift_rate;
  policy.seed_ = seed;
  policy.table_ = std::make_shared<const std::vector<double>>(std::move(table));
  policy.validate();
  return policy;
}

std::size_t PolicySpec::row_count() const {
  if (!table_ || vocab_size_ <= 0) return 0;
  return table_->size() / static_cast<std::size_t>(vocab_size_);
}

std::uint64_t PolicySpec::row_key(std::span<const TokenId> context) const {
  std::uint64_t key = 0;
  const auto need = static_cast<std::size_t>(order_);
  for (std::size_t i = 0; i < need; ++i) {
    // i-th of the last `order` positions, oldest first.
    TokenId t = eos_token_;
    if (context.size() + i >= need) t = context[context.size() + i - need];
    if (t < 0 || t >= vocab_size_) {
      throw std::invalid_argument("context token " + std::to_string(t) +
                                  " outside vocabulary");
    }
    key = key * static_cast<std::uint64_t>(vocab_size_) +
          static_cast<std::uint64_t>(t);
  }
  return key;
}

std::span<const double> PolicySpec::row(std::uint64_t key) const {
  if (key >= row_count()) throw std::out_of_range("policy row out of range");
  const auto vocab = static_cast<std::size_t>(vocab_size_);
  return std::span<const double>(table_->data() + key * vocab, vocab);
}

void PolicySpec::next_distribution(std::span<const TokenId> context,
                                   std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(vocab_size_)) {
    throw std::invalid_argument("distribution buffer has the wrong size");
  }
  const auto base = row(row_key(context));
  if (temperature_ == 1.0) {
    std::copy(base.begin(), base.end(), out.begin());
    return;
  }
  const double inv_t = 1.0 / std::max(temperature_, kMinTemperature);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < base.size(); ++i) {
    out[i] = base[i] > 0.0 ? std::log(base[i]) * inv_t
                           : -std::numeric_limits<double>::infinity();
    top = std::max(top, out[i]);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::isinf(v) ? 0.0 : std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
}

std::vector<double> PolicySpec::next_distribution(
    std::span<const TokenId> context) const {
  std::vector<double> out(static_cast<std::size_t>(vocab_size_));
  next_distribution(context, out);
  return out;
}

void PolicySpec::validate() const {
  if (row_count() == 0) throw std::invalid_argument("policy has no table");
  const std::size_t rows = row_count();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (double p : row(r)) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw std::invalid_argument("policy row " + std::to_string(r) +
                                    " has a negative or non-finite entry");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > kDistributionTolerance) {
      throw std::invalid_argument("policy row " + std::to_string(r) +
                                  " sums to " + internal::format_double(total));
    }
  }
}

std::string PolicySpec::serialize() const {
  using internal::format_double;
  std::ostringstream out;
  out << kPolicyMagic << ' ' << kPolicyVersion << '\n'
      << "kind " << policy_kind_name(kind_) << '\n'
      << "vocab_size " << vocab_size_ << '\n'
      << "order " << order_ << '\n'
      << "temperature " << format_double(temperature_) << '\n'
      << "eos_token " << eos_token_ << '\n'
      << "eos_prob " << format_double(eos_prob_) << '\n'
      << "sharpness " << format_double(sharpness_) << '\n'
      << "drift_rate " << format_double(drift_rate_) << '\n'
      << "seed " << seed_ << '\n'
      << "drift_steps " << drift_steps_ << '\n'
      << "rows " << row_count() << '\n';
  for (std::size_t r = 0; r < row_count(); ++r) {
    bool first = true;
    for (double p : row(r)) {
      if (!first) out << ' ';
      out << format_double(p);
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

PolicySpec PolicySpec::deserialize(const std::string& text) {
  using internal::parse_number;
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kPolicyMagic || version != kPolicyVersion) {
    throw std::invalid_argument("unsupported policy header");
  }
  PolicySpec policy;
  auto expect = [&](const char* key) {
    std::string word, value;
    if (!(in >> word >> value) || word != key) {
      throw std::invalid_argument(std::string("policy file: expected ") + key);
    }
    return value;
  };
  policy.kind_ = parse_policy_kind(expect("kind"));
  policy.vocab_size_ = parse_number<std::int32_t>(expect("vocab_size"), "vocab_size");
  policy.order_ = parse_number<std::int32_t>(expect("order"), "order");
  policy.temperature_ = parse_number<double>(expect("temperature"), "temperature");
  policy.eos_token_ = parse_number<TokenId>(expect("eos_token"), "eos_token");
  policy.eos_prob_ = parse_number<double>(expect("eos_prob"), "eos_prob");
  policy.sharpness_ = parse_number<double>(expect("sharpness"), "sharpness");
  policy.drift_rate_ = parse_number<double>(expect("drift_rate"), "drift_rate");
  policy.seed_ = parse_number<std::uint64_t>(expect("seed"), "seed");
  policy.drift_steps_ = parse_number<std::int64_t>(expect("drift_steps"), "drift_steps");
  const auto rows = parse_number<std::size_t>(expect("rows"), "rows");
  if (rows != checked_row_count(policy.vocab_size_, policy.order_)) {
    throw std::invalid_argument("policy file: row count does not match order");
  }
  auto table = std::make_shared<std::vector<double>>(
      rows * static_cast<std::size_t>(policy.vocab_size_));
  for (double& p : *table) {
    std::string word;
    if (!(in >> word)) throw std::invalid_argument("policy file truncated");
    p = parse_number<double>(word, "probability");
  }
  if (policy.eos_token_ < 0 || policy.eos_token_ >= policy.vocab_size_) {
    throw std::invalid_argument("policy file: eos_token outside vocabulary");
  }
  policy.table_ = std::move(table);
  policy.validate();
  return policy;
}

TokenId sample_token(std::span<const double> dist, RngDraw u) {
  if (dist.empty()) throw std::invalid_argument("empty distribution");
  if (!(u.value >= 0.0 && u.value < 1.0)) {
    throw std::invalid_argument("uniform draw outside [0, 1)");
  }
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("distribution has a negative entry");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kDistributionTolerance) {
    throw std::invalid_argument("distribution sums to " +
                                internal::format_double(total));
  }
  double cdf = 0.0;
  TokenId last_positive = 0;
  for (std::size_t t = 0; t < dist.size(); ++t) {
    cdf += dist[t];
    if (dist[t] > 0.0) last_positive = static_cast<TokenId>(t);
    if (cdf > u.value) return static_cast<TokenId>(t);
  }
  // Rounding left the CDF just below u.
  return last_positive;
}

PolicySpec drift_policy(const PolicySpec& policy, std::int64_t step) {
  if (policy.kind() != PolicyKind::kDriftingMarkov) {
    throw std::invalid_argument("drift_policy requires a drifting_markov policy");
  }
  PolicySpec next = policy;
  next.drift_steps_ = policy.drift_steps_ + 1;
  const double alpha = policy.drift_rate();
  if (alpha == 0.0) return next;

  const auto vocab = static_cast<std::size_t>(policy.vocab_size());
  const std::uint64_t step_seed =
      hash_words({policy.seed(), kDriftTag, static_cast<std::uint64_t>(step)});
  auto table = std::make_shared<std::vector<double>>(policy.table().size());
  std::vector<double> perturb(vocab);
  for (std::size_t r = 0; r < policy.row_count(); ++r) {
    fill_random_row(step_seed, r, policy.sharpness(), policy.eos_token(),
                    policy.eos_prob(), perturb);
    const auto old = policy.row(r);
    for (std::size_t i = 0; i < vocab; ++i) {
      (*table)[r * vocab + i] = (1.0 - alpha) * old[i] + alpha * perturb[i];
    }
  }
  next.table_ = std::move(table);
  return next;
}

std::vector<std::vector<TokenId>> parse_corpus(std::string_view text) {
  std::vector<std::vector<TokenId>> corpus;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream words(line);
    std::string word;
    std::vector<TokenId> seq;
    while (words >> word) {
      std::int64_t v = 0;
      try {
        v = internal::parse_number<std::int64_t>(word, "token id");
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument("corpus line " + std::to_string(line_no) +
                                    ": malformed token '" + word + "'");
      }
      if (v < 0 || v > std::numeric_limits<TokenId>::max()) {
        throw std::invalid_argument("corpus line " + std::to_string(line_no) +
                                    ": token id out of range");
      }
      seq.push_back(static_cast<TokenId>(v));
    }
    if (!seq.empty()) corpus.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<std::vector<TokenId>> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

PolicySpec replay_policy_from_sequences(
    const std::vector<std::vector<TokenId>>& corpus,
    const ReplayOptions& options) {
  TokenId max_token = -1;
  for (const auto& seq : corpus) {
    for (TokenId t : seq) max_token = std::max(max_token, t);
  }
  if (max_token < 0) throw std::invalid_argument("corpus is empty");

  std::int32_t vocab = options.vocab_size;
  if (vocab == 0) vocab = std::max({max_token + 1, options.eos_token + 1, 2});
  if (max_token >= vocab) {
    throw std::invalid_argument("corpus token exceeds vocab_size");
  }
  const std::size_t rows = checked_row_count(vocab, options.order);
  const auto v = static_cast<std::size_t>(vocab);

  std::vector<std::uint64_t> counts(rows * v, 0);
  std::vector<std::uint64_t> totals(rows, 0);
  const auto order = static_cast<std::size_t>(options.order);
  for (const auto& seq : corpus) {
    for (std::size_t i = order; i < seq.size(); ++i) {
      std::uint64_t key = 0;
      for (std::size_t j = i - order; j < i; ++j) {
        key = key * v + static_cast<std::uint64_t>(seq[j]);
      }
      ++counts[key * v + static_cast<std::size_t>(seq[i])];
      ++totals[key];
    }
  }
  std::vector<double> table(rows * v);
  for (std::size_t r = 0; r < rows; ++r) {
    const double denom = static_cast<double>(totals[r] + v);
    for (std::size_t t = 0; t < v; ++t) {
      table[r * v + t] = static_cast<double>(counts[r * v + t] + 1) / denom;
    }
  }
  return PolicySpec::from_table(PolicyKind::kReplay, vocab, options.order,
                                std::move(table), options.eos_token,
                                options.temperature);
}

PolicySpec replay_policy_from_corpus(const std::string& path,
                                     const ReplayOptions& options) {
  return replay_policy_from_sequences(read_corpus(path), options);
}

}  // namespace srt
