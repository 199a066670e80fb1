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

#include "srt/ablation.h"

#include <algorithm>
#include <future>
#include <limits>
#include <ostream>
#include <thread>

#include "text_util.h"

namespace srt {
namespace {

using internal::format_double;

SimulationConfig variant(const RunConfig& config, std::string_view label,
                         std::int32_t k) {
  RunConfig c = config;
  c.samples_per_prompt = k;
  c.run_ahead = label == "srt_runahead";
  c.mode = label == "baseline"       ? SimulationMode::kBaseline
           : label == "history_only" ? SimulationMode::kHistoryOnly
                                     : SimulationMode::kSrt;
  return build_simulation(c);
}

const AblationRun& find_run(const std::vector<AblationRun>& runs,
                            std::string_view label, std::int32_t k) {
  for (const auto& r : runs) {
    if (r.label == label && r.k == k) return r;
  }
  throw std::logic_error("missing ablation run");
}

}  // namespace

double relative_gain(double a, double b) {
  if (b == 0.0) return a > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return (a - b) / b;
}

AblationResult run_ablation(const RunConfig& config, const std::vector<std::int32_t>& ks,
                            bool keep_rollouts) {
  std::vector<std::int32_t> all_k{config.samples_per_prompt};
  for (std::int32_t k : ks) {
    if (std::find(all_k.begin(), all_k.end(), k) == all_k.end()) all_k.push_back(k);
  }

  std::vector<std::pair<std::string, std::int32_t>> jobs;
  for (std::int32_t k : all_k) {
    for (const char* label : kAblationLabels) jobs.emplace_back(label, k);
  }

  // Runs are independent and pure. Each holds a full set of trees, so only
  // as many run at once as there are hardware threads.
  const std::size_t width = std::max(1U, std::thread::hardware_concurrency());
  AblationResult out;
  for (std::size_t begin = 0; begin < jobs.size(); begin += width) {
    const std::size_t end = std::min(jobs.size(), begin + width);
    std::vector<std::future<SimulationResult>> wave;
    for (std::size_t j = begin; j < end; ++j) {
      SimulationConfig sim = variant(config, jobs[j].first, jobs[j].second);
      wave.push_back(std::async(std::launch::async,
                                [sim = std::move(sim)] { return run_simulation(sim); }));
    }
    for (std::size_t j = begin; j < end; ++j) {
      SimulationResult sim = wave[j - begin].get();
      AblationRun run;
      run.label = jobs[j].first;
      run.k = jobs[j].second;
      run.reports = std::move(sim.reports);
      if (keep_rollouts) {
        run.rollouts = std::move(sim.rollouts);
        run.run_ahead_ids = std::move(sim.run_ahead_ids);
      }
      run.mean_accepted = mean_of_means(run.reports);
      out.runs.push_back(std::move(run));
    }
  }
  for (auto& run : out.runs) {
    run.vs_baseline = speedup(find_run(out.runs, "baseline", run.k).reports, run.reports);
  }

  for (std::int32_t k : all_k) {
    KSweepRow row;
    row.k = k;
    row.history_only = find_run(out.runs, "history_only", k).mean_accepted;
    const AblationRun& srt = find_run(out.runs, "srt", k);
    const AblationRun& ahead = find_run(out.runs, "srt_runahead", k);
    row.srt = srt.mean_accepted;
    row.srt_runahead = ahead.mean_accepted;
    row.improvement = relative_gain(row.srt, row.history_only);
    row.improvement_runahead = relative_gain(row.srt_runahead, row.history_only);
    row.speedup = srt.vs_baseline.speedup;
    row.speedup_runahead = ahead.vs_baseline.speedup;
    out.sweep.push_back(row);
  }

  const std::int32_t k0 = config.samples_per_prompt;
  out.curves = aggregate_curves({{"history_only", find_run(out.runs, "history_only", k0).reports},
                             {"srt", find_run(out.runs, "srt", k0).reports},
                             {"srt_runahead", find_run(out.runs, "srt_runahead", k0).reports}});
  return out;
}

void write_ablation_summary_csv(std::ostream& out, const AblationResult& result) {
  bool header = true;
  for (const auto& run : result.runs) {
    write_summary_csv(out, run.reports, run.label, run.k, header);
    header = false;
  }
}

void write_k_sweep_csv(std::ostream& out, const AblationResult& result) {
  out << "k,history_only,srt,srt_runahead,improvement,improvement_runahead,"
         "speedup,speedup_runahead\n";
  for (const auto& r : result.sweep) {
    out << r.k << ',' << format_double(r.history_only) << ',' << format_double(r.srt)
        << ',' << format_double(r.srt_runahead) << ',' << format_double(r.improvement)
        << ',' << format_double(r.improvement_runahead) << ','
        << format_double(r.speedup) << ',' << format_double(r.speedup_runahead) << '\n';
  }
}

}  // namespace srt
