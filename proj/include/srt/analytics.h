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
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "srt/scheduler.h"

namespace srt {

// Raised when two runs that must share token streams do not.
class ExactnessViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NgramSet = std::set<std::vector<TokenId>>;

enum class OverlapCounting {
  // Every n-gram position counts, with multiplicity.
  kOccurrences,
  // Each distinct n-gram of the current rollouts counts once.
  kDistinct,
};

struct OverlapReport {
  std::int64_t step = 0;
  std::int32_t n = 0;
  double overlap_fraction = 0.0;
  std::int64_t matched = 0;
  std::int64_t total = 0;
  // Size of the historical set the current rollouts were compared against.
  std::int64_t historical_ngram_count = 0;
};

OverlapReport ngram_overlap(const std::vector<std::vector<TokenId>>& current,
                            const NgramSet& historical, std::int32_t n,
                            OverlapCounting counting = OverlapCounting::kOccurrences);
void absorb_ngrams(NgramSet& historical,
                   const std::vector<std::vector<TokenId>>& sequences,
                   std::int32_t n);

// Per prompt: overlap of each step's rollouts against the n-grams of all
// earlier steps' rollouts for that prompt, in step order.
std::map<std::string, std::vector<OverlapReport>> per_prompt_overlap(
    const std::vector<std::vector<SequenceResult>>& rollouts, std::int32_t n,
    OverlapCounting counting = OverlapCounting::kOccurrences);

struct CurveRow {
  std::int64_t step = 0;
  std::vector<double> mean_accepted;  // one entry per curve
};

struct CurveTable {
  std::vector<std::string> labels;
  std::vector<CurveRow> rows;
};

// Per-step mean accepted tokens for each labelled run. Runs must cover the
// same steps with identical training rollouts.
CurveTable aggregate_curves(
    const std::vector<std::pair<std::string, std::vector<StepReport>>>& runs);

struct TimeBreakdown {
  double rollout_time = 0.0;
  double update_time = 0.0;
  double rollout_fraction = 1.0;
};

TimeBreakdown time_breakdown(const std::vector<StepReport>& reports,
                             double update_cost_per_step);
// Update cost per step at which `reports` spend `rollout_fraction` of the
// total time in rollout.
double calibrate_update_cost(const std::vector<StepReport>& reports,
                             double rollout_fraction = 0.65);

struct SpeedupReport {
  double baseline_time = 0.0;
  double srt_time = 0.0;
  double speedup = 1.0;
  double mean_accepted = 0.0;
  // Simulated time per generated token.
  double per_token_cost = 0.0;
  double baseline_per_token_cost = 0.0;
  std::int64_t tokens = 0;
};

// Compares steps [first_step, end) of two runs. Throws ExactnessViolation if
// their training rollouts differ.
SpeedupReport speedup(const std::vector<StepReport>& baseline,
                      const std::vector<StepReport>& accelerated,
                      std::int64_t first_step = 0);

double mean_of_means(const std::vector<StepReport>& reports,
                     std::int64_t first_step = 0);

std::string report_to_json_line(const StepReport& report,
                                const std::string& mode_label);
StepReport report_from_json_line(const std::string& line);
void write_reports_jsonl(std::ostream& out,
                         const std::vector<StepReport>& reports,
                         const std::string& mode_label);
std::vector<StepReport> read_reports_jsonl(std::istream& in);

// Summary CSV, one row per step; `write_header` emits the column line.
void write_summary_csv(std::ostream& out, const std::vector<StepReport>& reports,
                       const std::string& mode_label, std::int32_t k,
                       bool write_header);
void write_curves_csv(std::ostream& out, const CurveTable& table);

}  // namespace srt
