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
#include <string>
#include <vector>

#include "srt/analytics.h"
#include "srt/config.h"

namespace srt {

// One cache-maintenance strategy at one samples-per-prompt setting.
struct AblationRun {
  std::string label;
  std::int32_t k = 0;
  std::vector<StepReport> reports;
  SpeedupReport vs_baseline;
  double mean_accepted = 0.0;  // mean over training steps
  // Filled only when run_ablation() is asked to keep them.
  std::vector<std::vector<SequenceResult>> rollouts;
  std::vector<std::uint64_t> run_ahead_ids;
};

struct KSweepRow {
  std::int32_t k = 0;
  double history_only = 0.0;
  double srt = 0.0;
  double srt_runahead = 0.0;
  // Relative gain in mean accepted tokens over history_only.
  double improvement = 0.0;
  double improvement_runahead = 0.0;
  double speedup = 1.0;
  double speedup_runahead = 1.0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<KSweepRow> sweep;
  // Curves at the configured samples-per-prompt.
  CurveTable curves;
};

inline constexpr const char* kAblationLabels[] = {"baseline", "history_only", "srt",
                                                  "srt_runahead"};

// Runs every strategy for the configured K and each K in `ks`, sharing all
// seeds. Throws ExactnessViolation if any strategy's training rollouts differ
// from the baseline's.
AblationResult run_ablation(const RunConfig& config, const std::vector<std::int32_t>& ks,
                            bool keep_rollouts = false);

// (a - b) / b, or +inf when b is zero and a is positive.
double relative_gain(double a, double b);

void write_ablation_summary_csv(std::ostream& out, const AblationResult& result);
void write_k_sweep_csv(std::ostream& out, const AblationResult& result);

}  // namespace srt
