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

#include "srt/config.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "srt/rng.h"

namespace srt {

namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kPolicySeedSalt = 0x9011C7;
constexpr std::uint64_t kDatasetSeedSalt = 0xDA7A5E7;
constexpr std::uint64_t kSyntheticSalt = 0x5E9;

// Reads keys from one JSON object and rejects any it did not consume.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    if (it->is_null()) {
      out.reset();
      return;
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (seen_.count(item.key()) == 0) {
        throw ConfigError("unknown config key '" + path(item.key().c_str()) + "'");
      }
    }
  }

  std::string path(const char* key) const {
    return where_.empty() ? std::string(key) : where_ + "." + key;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

void parse_dataset(const json& j, const std::string& base_dir, DatasetConfig& out) {
  ObjectReader r(j, "dataset");
  if (const json* prompts = r.sub("prompts")) {
    if (!prompts->is_array()) throw ConfigError("dataset.prompts: expected a list");
    for (const auto& p : *prompts) {
      ObjectReader pr(p, "dataset.prompts[]");
      Prompt prompt;
      pr.read("id", prompt.id);
      pr.read("tokens", prompt.tokens);
      pr.finish();
      if (prompt.id.empty()) throw ConfigError("dataset.prompts[]: missing id");
      out.prompts.push_back(std::move(prompt));
    }
  }
  r.read("corpus", out.corpus);
  out.corpus = resolve_path(out.corpus, base_dir);
  if (const json* syn = r.sub("synthetic")) {
    ObjectReader sr(*syn, "dataset.synthetic");
    SyntheticDataset s;
    sr.read("num_prompts", s.num_prompts);
    sr.read("prompt_len", s.prompt_len);
    sr.read_optional("seed", s.seed);
    sr.finish();
    out.synthetic = s;
  }
  r.finish();
  const int sources = (out.prompts.empty() ? 0 : 1) + (out.corpus.empty() ? 0 : 1) +
                      (out.synthetic ? 1 : 0);
  if (sources > 1) {
    throw ConfigError("dataset: give exactly one of prompts, corpus, synthetic");
  }
}

void parse_policy(const json& j, const std::string& base_dir, PolicyConfig& out) {
  ObjectReader r(j, "policy");
  std::string kind(policy_kind_name(out.markov.kind));
  r.read("kind", kind);
  try {
    out.markov.kind = parse_policy_kind(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("policy.kind: ") + e.what());
  }
  r.read("vocab_size", out.markov.vocab_size);
  r.read("order", out.markov.order);
  r.read("temperature", out.markov.temperature);
  r.read("eos_token", out.markov.eos_token);
  r.read("eos_prob", out.markov.eos_prob);
  r.read("sharpness", out.markov.sharpness);
  r.read("drift_rate", out.markov.drift_rate);
  r.read_optional("seed", out.seed);
  r.read("corpus", out.corpus);
  r.read("replay_order", out.replay_order);
  r.finish();
  out.corpus = resolve_path(out.corpus, base_dir);
  if (out.markov.kind == PolicyKind::kReplay && out.corpus.empty()) {
    throw ConfigError("policy.corpus is required for replay policies");
  }
}

void parse_tree(const json& j, TreeConfig& t) {
  ObjectReader r(j, "tree");
  r.read("max_depth", t.max_depth);
  r.read("max_nodes", t.max_nodes);
  r.read("max_match_len", t.max_match_len);
  r.read("budget_base", t.budget_base);
  r.read("budget_slope", t.budget_slope);
  r.read("budget_max", t.budget_max);
  r.read("min_path_score", t.min_path_score);
  r.read("decay", t.decay);
  std::string mode(insert_mode_name(t.insert_mode));
  r.read("insert_mode", mode);
  try {
    t.insert_mode = parse_insert_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("tree.insert_mode: ") + e.what());
  }
  r.finish();
}

void parse_analysis(const json& j, AnalysisConfig& a) {
  ObjectReader r(j, "analysis");
  r.read_optional("update_cost", a.update_cost);
  r.read("overlap_n", a.overlap_n);
  std::string counting =
      a.overlap_counting == OverlapCounting::kDistinct ? "distinct" : "occurrences";
  r.read("overlap_counting", counting);
  if (counting == "occurrences") {
    a.overlap_counting = OverlapCounting::kOccurrences;
  } else if (counting == "distinct") {
    a.overlap_counting = OverlapCounting::kDistinct;
  } else {
    throw ConfigError("analysis.overlap_counting: expected occurrences or distinct");
  }
  r.read("ablate_k", a.ablate_k);
  r.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  ObjectReader r(j, "");
  std::int32_t version = kConfigSchemaVersion;
  r.read("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("schema_version must be " +
                      std::to_string(kConfigSchemaVersion));
  }
  r.read("seed", c.seed);
  std::string mode(mode_name(c.mode));
  r.read("mode", mode);
  try {
    c.mode = parse_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mode: ") + e.what());
  }
  if (const json* d = r.sub("dataset")) parse_dataset(*d, base_dir, c.dataset);
  if (const json* p = r.sub("policy")) parse_policy(*p, base_dir, c.policy);
  if (const json* g = r.sub("generation")) {
    ObjectReader gr(*g, "generation");
    gr.read("max_new_tokens", c.max_new_tokens);
    gr.finish();
  }
  if (const json* s = r.sub("schedule")) {
    ObjectReader sr(*s, "schedule");
    sr.read("train_batch_size", c.train_batch_size);
    sr.read("samples_per_prompt", c.samples_per_prompt);
    sr.read("epochs", c.epochs);
    sr.read("batch_slots", c.batch_slots);
    sr.read("run_ahead", c.run_ahead);
    sr.read("on_the_fly_updates", c.on_the_fly_updates);
    sr.read("lookahead_window", c.lookahead_window);
    sr.read("run_ahead_fullness", c.run_ahead_fullness);
    sr.finish();
  }
  if (const json* t = r.sub("tree")) parse_tree(*t, c.tree);
  if (const json* e = r.sub("engine")) {
    ObjectReader er(*e, "engine");
    er.read("draft_token_surcharge", c.cost.draft_token_surcharge);
    er.finish();
  }
  if (const json* a = r.sub("analysis")) parse_analysis(*a, c.analysis);
  r.finish();
  if (!c.dataset.synthetic && c.dataset.prompts.empty() && c.dataset.corpus.empty()) {
    c.dataset.synthetic = SyntheticDataset{};
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path().string();
  try {
    return parse_config(buf.str(), dir);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::uint64_t policy_seed(const RunConfig& config) {
  return config.policy.seed.value_or(hash_words({config.seed, kPolicySeedSalt}));
}

std::uint64_t dataset_seed(const RunConfig& config) {
  if (config.dataset.synthetic && config.dataset.synthetic->seed) {
    return *config.dataset.synthetic->seed;
  }
  return hash_words({config.seed, kDatasetSeedSalt});
}

std::string resolved_config_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  j["mode"] = std::string(mode_name(c.mode));

  json d = json::object();
  if (!c.dataset.prompts.empty()) {
    json prompts = json::array();
    for (const auto& p : c.dataset.prompts) {
      prompts.push_back({{"id", p.id}, {"tokens", p.tokens}});
    }
    d["prompts"] = std::move(prompts);
  } else if (!c.dataset.corpus.empty()) {
    d["corpus"] = c.dataset.corpus;
  } else {
    const SyntheticDataset s = c.dataset.synthetic.value_or(SyntheticDataset{});
    d["synthetic"] = {{"num_prompts", s.num_prompts},
                      {"prompt_len", s.prompt_len},
                      {"seed", dataset_seed(c)}};
  }
  j["dataset"] = std::move(d);

  const MarkovOptions& m = c.policy.markov;
  json p;
  p["kind"] = std::string(policy_kind_name(m.kind));
  p["vocab_size"] = m.vocab_size;
  p["order"] = m.order;
  p["temperature"] = m.temperature;
  p["eos_token"] = m.eos_token;
  p["eos_prob"] = m.eos_prob;
  p["sharpness"] = m.sharpness;
  p["drift_rate"] = m.drift_rate;
  p["seed"] = policy_seed(c);
  p["corpus"] = c.policy.corpus;
  p["replay_order"] = c.policy.replay_order;
  j["policy"] = std::move(p);

  j["generation"] = {{"max_new_tokens", c.max_new_tokens}};
  j["schedule"] = {{"train_batch_size", c.train_batch_size},
                   {"samples_per_prompt", c.samples_per_prompt},
                   {"epochs", c.epochs},
                   {"batch_slots", c.batch_slots},
                   {"run_ahead", c.run_ahead},
                   {"on_the_fly_updates", c.on_the_fly_updates},
                   {"lookahead_window", c.lookahead_window},
                   {"run_ahead_fullness", c.run_ahead_fullness}};
  const TreeConfig& t = c.tree;
  j["tree"] = {{"max_depth", t.max_depth},
               {"max_nodes", t.max_nodes},
               {"max_match_len", t.max_match_len},
               {"budget_base", t.budget_base},
               {"budget_slope", t.budget_slope},
               {"budget_max", t.budget_max},
               {"min_path_score", t.min_path_score},
               {"decay", t.decay},
               {"insert_mode", std::string(insert_mode_name(t.insert_mode))}};
  j["engine"] = {{"draft_token_surcharge", c.cost.draft_token_surcharge}};
  json a;
  if (c.analysis.update_cost) {
    a["update_cost"] = *c.analysis.update_cost;
  } else {
    a["update_cost"] = nullptr;
  }
  a["overlap_n"] = c.analysis.overlap_n;
  a["overlap_counting"] = c.analysis.overlap_counting == OverlapCounting::kDistinct
                              ? "distinct"
                              : "occurrences";
  a["ablate_k"] = c.analysis.ablate_k;
  j["analysis"] = std::move(a);
  return j.dump(2) + "\n";
}

PolicySpec build_policy(const RunConfig& config) {
  const MarkovOptions& m = config.policy.markov;
  if (m.kind == PolicyKind::kReplay) {
    ReplayOptions opts;
    opts.order = config.policy.replay_order;
    opts.vocab_size = m.vocab_size;
    opts.eos_token = m.eos_token;
    opts.temperature = m.temperature;
    return replay_policy_from_corpus(config.policy.corpus, opts);
  }
  MarkovOptions opts = m;
  opts.seed = policy_seed(config);
  return PolicySpec::random_markov(opts);
}

std::vector<Prompt> synthetic_prompts(std::int32_t num_prompts,
                                      std::int32_t prompt_len,
                                      std::int32_t vocab_size, TokenId eos,
                                      std::uint64_t seed) {
  if (num_prompts < 1) throw ConfigError("synthetic num_prompts must be >= 1");
  if (prompt_len < 0) throw ConfigError("synthetic prompt_len must be >= 0");
  if (vocab_size < 2) throw ConfigError("synthetic prompts need vocab_size >= 2");
  std::vector<Prompt> out;
  out.reserve(static_cast<std::size_t>(num_prompts));
  for (std::int32_t i = 0; i < num_prompts; ++i) {
    Prompt p;
    p.id = "p" + std::to_string(i);
    for (std::int32_t t = 0; t < prompt_len; ++t) {
      const double u = rng_draw(seed, hash_words({kSyntheticSalt, static_cast<std::uint64_t>(i)}),
                                static_cast<std::uint64_t>(t))
                           .value;
      // Uniform over the vocab_size - 1 non-EOS tokens.
      auto tok = static_cast<TokenId>(u * (vocab_size - 1));
      if (tok >= eos) ++tok;
      p.tokens.push_back(tok);
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::vector<Prompt> dataset_for(const RunConfig& config, std::int32_t vocab_size) {
  const DatasetConfig& d = config.dataset;
  if (!d.prompts.empty()) return d.prompts;
  if (!d.corpus.empty()) {
    std::vector<Prompt> out;
    const auto seqs = read_corpus(d.corpus);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      out.push_back(Prompt{"p" + std::to_string(i), seqs[i]});
    }
    return out;
  }
  const SyntheticDataset s = d.synthetic.value_or(SyntheticDataset{});
  return synthetic_prompts(s.num_prompts, s.prompt_len, vocab_size,
                           config.policy.markov.eos_token, dataset_seed(config));
}

}  // namespace

std::vector<Prompt> build_dataset(const RunConfig& config) {
  std::int32_t vocab = config.policy.markov.vocab_size;
  if (config.policy.markov.kind == PolicyKind::kReplay && vocab == 0) {
    vocab = build_policy(config).vocab_size();
  }
  return dataset_for(config, vocab);
}

SimulationConfig build_simulation(const RunConfig& config) {
  SimulationConfig s;
  s.policy = build_policy(config);
  s.dataset = dataset_for(config, s.policy.vocab_size());
  s.train_batch_size = config.train_batch_size;
  s.samples_per_prompt = config.samples_per_prompt;
  s.epochs = config.epochs;
  s.batch_slots = config.batch_slots;
  s.run_ahead = config.run_ahead;
  s.on_the_fly_updates = config.on_the_fly_updates;
  s.lookahead_window = config.lookahead_window;
  s.run_ahead_fullness = config.run_ahead_fullness;
  s.max_new_tokens = config.max_new_tokens;
  s.seed = config.seed;
  s.tree = config.tree;
  s.cost = config.cost;
  s.mode = config.mode;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

}  // namespace srt
