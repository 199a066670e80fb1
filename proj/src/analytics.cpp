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

#include "srt/analytics.h"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "text_util.h"

namespace srt {

using internal::format_double;
using json = nlohmann::ordered_json;

OverlapReport ngram_overlap(const std::vector<std::vector<TokenId>>& current,
                            const NgramSet& historical, std::int32_t n,
                            OverlapCounting counting) {
  if (n < 1) throw std::invalid_argument("n-gram order must be >= 1");
  OverlapReport report;
  report.n = n;
  report.historical_ngram_count = static_cast<std::int64_t>(historical.size());

  const auto width = static_cast<std::size_t>(n);
  NgramSet seen;
  std::vector<TokenId> gram(width);
  for (const auto& seq : current) {
    if (seq.size() < width) continue;
    for (std::size_t i = 0; i + width <= seq.size(); ++i) {
      std::copy(seq.begin() + i, seq.begin() + i + width, gram.begin());
      if (counting == OverlapCounting::kDistinct && !seen.insert(gram).second) {
        continue;
      }
      ++report.total;
      if (historical.count(gram) != 0) ++report.matched;
    }
  }
  report.overlap_fraction =
      report.total > 0 ? static_cast<double>(report.matched) /
                             static_cast<double>(report.total)
                       : 0.0;
  return report;
}

void absorb_ngrams(NgramSet& historical,
                   const std::vector<std::vector<TokenId>>& sequences,
                   std::int32_t n) {
  if (n < 1) throw std::invalid_argument("n-gram order must be >= 1");
  const auto width = static_cast<std::size_t>(n);
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i + width <= seq.size(); ++i) {
      historical.emplace(seq.begin() + i, seq.begin() + i + width);
    }
  }
}

std::map<std::string, std::vector<OverlapReport>> per_prompt_overlap(
    const std::vector<std::vector<SequenceResult>>& rollouts, std::int32_t n,
    OverlapCounting counting) {
  std::map<std::string, NgramSet> history;
  std::map<std::string, std::vector<OverlapReport>> out;
  for (std::size_t step = 0; step < rollouts.size(); ++step) {
    std::map<std::string, std::vector<std::vector<TokenId>>> current;
    for (const auto& r : rollouts[step]) {
      current[r.prompt_id].push_back(r.record.tokens);
    }
    for (const auto& [prompt, seqs] : current) {
      NgramSet& hist = history[prompt];
      OverlapReport rep = ngram_overlap(seqs, hist, n, counting);
      rep.step = static_cast<std::int64_t>(step);
      out[prompt].push_back(rep);
      absorb_ngrams(hist, seqs, n);
    }
  }
  return out;
}

CurveTable aggregate_curves(
    const std::vector<std::pair<std::string, std::vector<StepReport>>>& runs) {
  CurveTable table;
  if (runs.empty()) return table;
  const auto& first = runs.front().second;
  for (const auto& [label, reports] : runs) {
    if (reports.size() != first.size()) {
      throw std::invalid_argument("aggregate_curves: run '" + label +
                                  "' covers a different number of steps");
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (reports[i].step != first[i].step) {
        throw std::invalid_argument("aggregate_curves: step numbering differs");
      }
      if (reports[i].rollout_digest != first[i].rollout_digest) {
        throw std::invalid_argument("aggregate_curves: run '" + label +
                                    "' has different rollouts at step " +
                                    std::to_string(reports[i].step) +
                                    " (mismatched configs)");
      }
    }
    table.labels.push_back(label);
  }
  for (std::size_t i = 0; i < first.size(); ++i) {
    CurveRow row;
    row.step = first[i].step;
    for (const auto& run : runs) {
      row.mean_accepted.push_back(run.second[i].mean_accepted);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

TimeBreakdown time_breakdown(const std::vector<StepReport>& reports,
                             double update_cost_per_step) {
  if (update_cost_per_step < 0.0) {
    throw std::invalid_argument("update cost must be >= 0");
  }
  TimeBreakdown out;
  for (const auto& r : reports) out.rollout_time += r.simulated_time;
  out.update_time = update_cost_per_step * static_cast<double>(reports.size());
  const double total = out.rollout_time + out.update_time;
  out.rollout_fraction = total > 0.0 ? out.rollout_time / total : 1.0;
  return out;
}

double calibrate_update_cost(const std::vector<StepReport>& reports,
                             double rollout_fraction) {
  if (!(rollout_fraction > 0.0 && rollout_fraction <= 1.0)) {
    throw std::invalid_argument("rollout fraction must lie in (0, 1]");
  }
  if (reports.empty()) return 0.0;
  double rollout = 0.0;
  for (const auto& r : reports) rollout += r.simulated_time;
  const double update_total = rollout * (1.0 - rollout_fraction) / rollout_fraction;
  return update_total / static_cast<double>(reports.size());
}

SpeedupReport speedup(const std::vector<StepReport>& baseline,
                      const std::vector<StepReport>& accelerated,
                      std::int64_t first_step) {
  if (baseline.size() != accelerated.size()) {
    throw ExactnessViolation("runs cover different numbers of steps");
  }
  SpeedupReport out;
  std::int64_t base_tokens = 0, steps = 0, accepted = 0;
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    const auto& b = baseline[i];
    const auto& a = accelerated[i];
    if (b.rollout_digest != a.rollout_digest || b.tokens_total != a.tokens_total) {
      throw ExactnessViolation("training rollouts differ at step " +
                               std::to_string(b.step));
    }
    if (b.step < first_step) continue;
    out.baseline_time += b.simulated_time;
    out.srt_time += a.simulated_time;
    base_tokens += b.tokens_total;
    out.tokens += a.tokens_total;
    steps += a.engine_steps_total;
    accepted += a.accepted_total;
  }
  out.speedup = out.srt_time > 0.0 ? out.baseline_time / out.srt_time : 1.0;
  out.mean_accepted =
      steps > 0 ? static_cast<double>(accepted) / static_cast<double>(steps) : 0.0;
  out.per_token_cost =
      out.tokens > 0 ? out.srt_time / static_cast<double>(out.tokens) : 0.0;
  out.baseline_per_token_cost =
      base_tokens > 0 ? out.baseline_time / static_cast<double>(base_tokens) : 0.0;
  return out;
}

double mean_of_means(const std::vector<StepReport>& reports,
                     std::int64_t first_step) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& r : reports) {
    if (r.step < first_step) continue;
    sum += r.mean_accepted;
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

std::string report_to_json_line(const StepReport& r,
                                const std::string& mode_label) {
  json j;
  j["mode"] = mode_label;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["sequences"] = r.sequences;
  j["engine_steps_total"] = r.engine_steps_total;
  j["tokens_total"] = r.tokens_total;
  j["accepted_total"] = r.accepted_total;
  j["mean_accepted"] = r.mean_accepted;
  j["fallback_steps"] = r.fallback_steps;
  j["ticks"] = r.ticks;
  j["simulated_time"] = r.simulated_time;
  j["bubble_slot_steps"] = r.bubble_slot_steps;
  j["run_ahead_tokens"] = r.run_ahead_tokens;
  j["run_ahead_sequences"] = r.run_ahead_sequences;
  j["max_length"] = r.max_length;
  j["mean_length"] = r.mean_length;
  j["rollout_digest"] = r.rollout_digest;
  json prompts = json::array();
  for (const auto& p : r.per_prompt) {
    prompts.push_back({{"prompt_id", p.prompt_id},
                       {"sequences", p.sequences},
                       {"tokens", p.tokens},
                       {"engine_steps", p.engine_steps},
                       {"accepted", p.accepted},
                       {"last_finish_tick", p.last_finish_tick}});
  }
  j["per_prompt"] = std::move(prompts);
  return j.dump();
}

StepReport report_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  StepReport r;
  r.step = j.at("step").get<std::int64_t>();
  r.epoch = j.at("epoch").get<std::int64_t>();
  r.sequences = j.at("sequences").get<std::int64_t>();
  r.engine_steps_total = j.at("engine_steps_total").get<std::int64_t>();
  r.tokens_total = j.at("tokens_total").get<std::int64_t>();
  r.accepted_total = j.at("accepted_total").get<std::int64_t>();
  r.mean_accepted = j.at("mean_accepted").get<double>();
  r.fallback_steps = j.at("fallback_steps").get<std::int64_t>();
  r.ticks = j.at("ticks").get<std::int64_t>();
  r.simulated_time = j.at("simulated_time").get<double>();
  r.bubble_slot_steps = j.at("bubble_slot_steps").get<std::int64_t>();
  r.run_ahead_tokens = j.at("run_ahead_tokens").get<std::int64_t>();
  r.run_ahead_sequences = j.at("run_ahead_sequences").get<std::int64_t>();
  r.max_length = j.at("max_length").get<std::int64_t>();
  r.mean_length = j.at("mean_length").get<double>();
  r.rollout_digest = j.at("rollout_digest").get<std::uint64_t>();
  for (const auto& p : j.at("per_prompt")) {
    PromptBreakdown pb;
    pb.prompt_id = p.at("prompt_id").get<std::string>();
    pb.sequences = p.at("sequences").get<std::int64_t>();
    pb.tokens = p.at("tokens").get<std::int64_t>();
    pb.engine_steps = p.at("engine_steps").get<std::int64_t>();
    pb.accepted = p.at("accepted").get<std::int64_t>();
    pb.last_finish_tick = p.at("last_finish_tick").get<std::int64_t>();
    r.per_prompt.push_back(std::move(pb));
  }
  return r;
}

void write_reports_jsonl(std::ostream& out,
                         const std::vector<StepReport>& reports,
                         const std::string& mode_label) {
  for (const auto& r : reports) out << report_to_json_line(r, mode_label) << '\n';
}

std::vector<StepReport> read_reports_jsonl(std::istream& in) {
  std::vector<StepReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(report_from_json_line(line));
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<StepReport>& reports,
                       const std::string& mode_label, std::int32_t k,
                       bool write_header) {
  if (write_header) {
    out << "mode,k,step,epoch,sequences,tokens_total,engine_steps_total,"
           "accepted_total,mean_accepted,fallback_steps,ticks,simulated_time,"
           "bubble_slot_steps,run_ahead_tokens,run_ahead_sequences,max_length,"
           "mean_length\n";
  }
  for (const auto& r : reports) {
    out << mode_label << ',' << k << ',' << r.step << ',' << r.epoch << ','
        << r.sequences << ',' << r.tokens_total << ',' << r.engine_steps_total
        << ',' << r.accepted_total << ',' << format_double(r.mean_accepted)
        << ',' << r.fallback_steps << ',' << r.ticks << ','
        << format_double(r.simulated_time) << ',' << r.bubble_slot_steps << ','
        << r.run_ahead_tokens << ',' << r.run_ahead_sequences << ','
        << r.max_length << ',' << format_double(r.mean_length) << '\n';
  }
}

void write_curves_csv(std::ostream& out, const CurveTable& table) {
  out << "step";
  for (const auto& l : table.labels) out << ',' << l;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.step;
    for (double v : row.mean_accepted) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace srt
