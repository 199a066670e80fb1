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

// Python bindings for the simulator core, exposed as srt_sim._core.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "srt/ablation.h"
#include "srt/analytics.h"
#include "srt/cli.h"
#include "srt/config.h"
#include "srt/exactness.h"

namespace py = pybind11;
using namespace py::literals;

namespace srt {
namespace {

py::dict record_to_dict(const RolloutRecord& r) {
  py::list steps;
  for (const auto& s : r.steps) {
    steps.append(py::dict("drafted"_a = s.drafted, "accepted"_a = s.accepted,
                          "emitted"_a = s.emitted, "used_fallback"_a = s.used_fallback,
                          "match_len"_a = s.match_len));
  }
  const char* why = r.terminated_by == Termination::kEos      ? "eos"
                    : r.terminated_by == Termination::kLength ? "length"
                                                              : "running";
  return py::dict("tokens"_a = r.tokens, "steps"_a = steps, "terminated_by"_a = why,
                  "accepted"_a = r.total_accepted());
}

py::dict report_to_dict(const StepReport& r) {
  return py::dict("step"_a = r.step, "epoch"_a = r.epoch, "sequences"_a = r.sequences,
                  "tokens_total"_a = r.tokens_total,
                  "engine_steps_total"_a = r.engine_steps_total,
                  "accepted_total"_a = r.accepted_total, "mean_accepted"_a = r.mean_accepted,
                  "simulated_time"_a = r.simulated_time, "ticks"_a = r.ticks,
                  "bubble_slot_steps"_a = r.bubble_slot_steps,
                  "run_ahead_tokens"_a = r.run_ahead_tokens,
                  "rollout_digest"_a = r.rollout_digest);
}

GenerationParams make_params(std::int32_t max_new_tokens, std::uint64_t seed,
                             std::uint64_t sequence_id) {
  GenerationParams p;
  p.max_new_tokens = max_new_tokens;
  p.seed = seed;
  p.sequence_id = sequence_id;
  return p;
}

void bind_tree(py::module_& m) {
  py::enum_<InsertMode>(m, "InsertMode")
      .value("ALL_SUFFIXES", InsertMode::kAllSuffixes)
      .value("ROOT_PATH_ONLY", InsertMode::kRootPathOnly);

  py::class_<TreeConfig>(m, "TreeConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &TreeConfig::vocab_size)
      .def_readwrite("max_depth", &TreeConfig::max_depth)
      .def_readwrite("max_nodes", &TreeConfig::max_nodes)
      .def_readwrite("max_match_len", &TreeConfig::max_match_len)
      .def_readwrite("budget_base", &TreeConfig::budget_base)
      .def_readwrite("budget_slope", &TreeConfig::budget_slope)
      .def_readwrite("budget_max", &TreeConfig::budget_max)
      .def_readwrite("min_path_score", &TreeConfig::min_path_score)
      .def_readwrite("decay", &TreeConfig::decay)
      .def_readwrite("insert_mode", &TreeConfig::insert_mode)
      .def("budget", &TreeConfig::budget, "match_len"_a)
      .def("validate", &TreeConfig::validate);

  py::class_<RolloutTree>(m, "RolloutTree")
      .def(py::init<std::string, TreeConfig>(), "prompt_id"_a, "config"_a = TreeConfig{})
      .def_property_readonly("prompt_id", &RolloutTree::prompt_id)
      .def_property_readonly("node_count", &RolloutTree::node_count)
      .def("insert_sequence",
           [](RolloutTree& t, const std::vector<TokenId>& tokens) {
             return t.insert_sequence(tokens).nodes_created;
           },
           "tokens"_a, "Indexes a sequence; returns the number of nodes created.")
      .def("count",
           [](const RolloutTree& t, const std::vector<TokenId>& path) -> std::uint64_t {
             const auto node = t.find_path(path);
             return node ? t.count(*node) : 0;
           },
           "path"_a)
      .def("children",
           [](const RolloutTree& t, const std::vector<TokenId>& path) {
             py::dict out;
             const auto node = t.find_path(path);
             if (!node) return out;
             for (const auto& [tok, kid] : t.children(*node)) out[py::int_(tok)] = t.count(kid);
             return out;
           },
           "path"_a, "Child token -> count below `path`.")
      .def("longest_suffix_match",
           [](const RolloutTree& t, const std::vector<TokenId>& context) -> py::object {
             const auto m = t.longest_suffix_match(context);
             if (!m) return py::none();
             return py::int_(m->length);
           },
           "context"_a)
      .def("draft",
           [](const RolloutTree& t, const std::vector<TokenId>& context) {
             py::list out;
             const auto m = t.longest_suffix_match(context);
             if (!m) return out;
             const DraftTree d = t.assemble_draft(m->node, m->length);
             for (const auto& n : d.nodes) {
               out.append(py::dict("token"_a = n.token, "parent"_a = n.parent,
                                   "depth"_a = n.depth, "score"_a = n.path_score));
             }
             return out;
           },
           "context"_a, "Draft nodes for the longest suffix match of `context`.")
      .def("evict", &RolloutTree::evict)
      .def("check_invariants", &RolloutTree::check_invariants)
      .def("snapshot", &RolloutTree::snapshot)
      .def_static("from_snapshot", &RolloutTree::from_snapshot, "text"_a);
}

void bind_policy(py::module_& m) {
  py::enum_<PolicyKind>(m, "PolicyKind")
      .value("MARKOV", PolicyKind::kMarkov)
      .value("DRIFTING_MARKOV", PolicyKind::kDriftingMarkov)
      .value("REPLAY", PolicyKind::kReplay);

  py::class_<MarkovOptions>(m, "MarkovOptions")
      .def(py::init<>())
      .def_readwrite("kind", &MarkovOptions::kind)
      .def_readwrite("vocab_size", &MarkovOptions::vocab_size)
      .def_readwrite("order", &MarkovOptions::order)
      .def_readwrite("temperature", &MarkovOptions::temperature)
      .def_readwrite("eos_token", &MarkovOptions::eos_token)
      .def_readwrite("eos_prob", &MarkovOptions::eos_prob)
      .def_readwrite("sharpness", &MarkovOptions::sharpness)
      .def_readwrite("drift_rate", &MarkovOptions::drift_rate)
      .def_readwrite("seed", &MarkovOptions::seed);

  py::class_<PolicySpec>(m, "PolicySpec")
      .def_static("random_markov", &PolicySpec::random_markov, "options"_a)
      .def_static("from_corpus",
                  [](const std::vector<std::vector<TokenId>>& corpus, std::int32_t order,
                     std::int32_t vocab_size, TokenId eos_token) {
                    ReplayOptions o;
                    o.order = order;
                    o.vocab_size = vocab_size;
                    o.eos_token = eos_token;
                    return replay_policy_from_sequences(corpus, o);
                  },
                  "corpus"_a, "order"_a = 1, "vocab_size"_a = 0, "eos_token"_a = 0)
      .def_property_readonly("vocab_size", &PolicySpec::vocab_size)
      .def_property_readonly("order", &PolicySpec::order)
      .def_property_readonly("eos_token", &PolicySpec::eos_token)
      .def("next_distribution",
           [](const PolicySpec& p, const std::vector<TokenId>& context) {
             return p.next_distribution(context);
           },
           "context"_a)
      .def("drifted", [](const PolicySpec& p, std::int64_t step) { return drift_policy(p, step); },
           "step"_a)
      .def("serialize", &PolicySpec::serialize)
      .def_static("deserialize", &PolicySpec::deserialize, "text"_a);

  m.def("baseline_generate",
        [](const PolicySpec& p, const std::vector<TokenId>& prompt, std::int32_t max_new_tokens,
           std::uint64_t seed, std::uint64_t sequence_id) {
          return record_to_dict(
              baseline_generate(p, prompt, make_params(max_new_tokens, seed, sequence_id)));
        },
        "policy"_a, "prompt"_a, "max_new_tokens"_a = 256, "seed"_a = 0, "sequence_id"_a = 0);
  m.def("speculative_generate",
        [](const PolicySpec& p, const std::vector<TokenId>& prompt, const RolloutTree& tree,
           std::int32_t max_new_tokens, std::uint64_t seed, std::uint64_t sequence_id) {
          return record_to_dict(speculative_generate(
              p, prompt, tree, make_params(max_new_tokens, seed, sequence_id)));
        },
        "policy"_a, "prompt"_a, "tree"_a, "max_new_tokens"_a = 256, "seed"_a = 0,
        "sequence_id"_a = 0);
}

void bind_runs(py::module_& m) {
  m.def("simulate",
        [](const std::string& config_json) {
          const RunConfig c = parse_config(config_json);
          SimulationResult r;
          {
            py::gil_scoped_release release;
            r = run_simulation(build_simulation(c));
          }
          py::list reports;
          for (const auto& rep : r.reports) reports.append(report_to_dict(rep));
          py::list rollouts;
          for (const auto& step : r.rollouts) {
            py::list seqs;
            for (const auto& s : step) {
              seqs.append(py::dict("prompt_id"_a = s.prompt_id, "sample"_a = s.sample,
                                   "sequence_id"_a = s.sequence_id,
                                   "tokens"_a = s.record.tokens));
            }
            rollouts.append(seqs);
          }
          return py::dict("reports"_a = reports, "rollouts"_a = rollouts,
                          "run_ahead_ids"_a = r.run_ahead_ids);
        },
        "config_json"_a, "Runs one simulation from a JSON config string.");
  m.def("resolved_config", [](const std::string& text) {
    return resolved_config_json(parse_config(text));
  }, "config_json"_a);

  m.def("verify_exactness",
        [](std::int64_t trials, std::uint64_t seed) {
          ExactnessSummary s;
          {
            py::gil_scoped_release release;
            s = verify_exactness(trials, seed);
          }
          py::object failure = py::none();
          if (s.first_failure_seed) failure = py::int_(*s.first_failure_seed);
          return py::dict("trials"_a = s.trials, "identical"_a = s.identical,
                          "accepted"_a = s.total_accepted, "ok"_a = s.ok(),
                          "first_failure_seed"_a = failure);
        },
        "trials"_a, "seed"_a = 0);

  m.def("ngram_overlap",
        [](const std::vector<std::vector<TokenId>>& current,
           const std::vector<std::vector<TokenId>>& history, std::int32_t n, bool distinct) {
          NgramSet set;
          absorb_ngrams(set, history, n);
          return ngram_overlap(current, set, n,
                               distinct ? OverlapCounting::kDistinct
                                        : OverlapCounting::kOccurrences)
              .overlap_fraction;
        },
        "current"_a, "history"_a, "n"_a = 4, "distinct"_a = false);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          const int code = run_cli(args, out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        "args"_a, "Runs the command-line tool in-process; returns (code, stdout, stderr).");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ExactnessViolation>(m, "ExactnessViolation", PyExc_RuntimeError);
}

}  // namespace
}  // namespace srt

PYBIND11_MODULE(_core, m) {
  m.doc() = "Speculative rollout simulator core";
  srt::bind_tree(m);
  srt::bind_policy(m);
  srt::bind_runs(m);
}
