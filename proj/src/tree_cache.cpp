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

#include "srt/tree_cache.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "text_util.h"

namespace srt {

std::string_view insert_mode_name(InsertMode mode) {
  return mode == InsertMode::kAllSuffixes ? "all_suffixes" : "root_path_only";
}

InsertMode parse_insert_mode(std::string_view name) {
  if (name == "all_suffixes") return InsertMode::kAllSuffixes;
  if (name == "root_path_only") return InsertMode::kRootPathOnly;
  throw std::invalid_argument("unknown insert mode '" + std::string(name) +
                              "'");
}

namespace {

constexpr char kSnapshotMagic[] = "srt-tree";
constexpr int kSnapshotVersion = 1;


auto sibling_less(const std::pair<TokenId, NodeId>& entry, TokenId token) {
  return entry.first < token;
}

}  // namespace

void TreeConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("invalid tree config: " + msg);
  };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (max_depth < 1) fail("max_depth must be >= 1");
  if (max_nodes < 1) fail("max_nodes must be >= 1");
  if (max_match_len < 1) fail("max_match_len must be >= 1");
  if (max_match_len > max_depth) fail("max_match_len must be <= max_depth");
  if (budget_base < 1) fail("budget_base must be >= 1");
  if (!(budget_slope >= 0.0) || !std::isfinite(budget_slope)) {
    fail("budget_slope must be a finite non-negative number");
  }
  if (budget_max < 1) fail("budget_max must be >= 1");
  if (budget_base > budget_max) fail("budget_base must be <= budget_max");
  if (!(min_path_score >= 0.0 && min_path_score <= 1.0)) {
    fail("min_path_score must lie in [0, 1]");
  }
  if (!(decay > 0.0 && decay <= 1.0)) fail("decay must lie in (0, 1]");
}

std::int32_t TreeConfig::budget(std::int32_t match_len) const {
  const double extra = std::floor(budget_slope * std::max(match_len, 0));
  const double total = static_cast<double>(budget_base) + extra;
  return static_cast<std::int32_t>(
      std::min<double>(static_cast<double>(budget_max), total));
}

InsertStats& InsertStats::operator+=(const InsertStats& other) {
  paths_added += other.paths_added;
  nodes_created += other.nodes_created;
  nodes_rejected += other.nodes_rejected;
  nodes_evicted += other.nodes_evicted;
  return *this;
}

std::int32_t DraftTree::find_child(std::int32_t parent, TokenId token) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].parent == parent && nodes[i].token == token) {
      return static_cast<std::int32_t>(i);
    }
  }
  return -1;
}

std::int32_t DraftTree::max_depth() const {
  std::int32_t deepest = 0;
  for (const auto& n : nodes) deepest = std::max(deepest, n.depth);
  return deepest;
}

RolloutTree::RolloutTree(std::string prompt_id, TreeConfig config)
    : prompt_id_(std::move(prompt_id)), config_(config) {
  config_.validate();
  Node root;
  root.alive = true;
  nodes_.push_back(std::move(root));
}

const RolloutTree::Node& RolloutTree::node(NodeId id) const {
  if (id.index < 0 || static_cast<std::size_t>(id.index) >= nodes_.size() ||
      !nodes_[id.index].alive) {
    throw std::invalid_argument("stale or invalid node handle " +
                                std::to_string(id.index));
  }
  return nodes_[id.index];
}

RolloutTree::Node& RolloutTree::node(NodeId id) {
  return const_cast<Node&>(std::as_const(*this).node(id));
}

void RolloutTree::check_token(TokenId token) const {
  if (token < 0 || token >= config_.vocab_size) {
    throw std::invalid_argument("token " + std::to_string(token) +
                                " outside vocabulary of size " +
                                std::to_string(config_.vocab_size));
  }
}

NodeId RolloutTree::find_or_create_child(NodeId parent, TokenId token,
                                         bool* created) {
  *created = false;
  {
    const auto& kids = node(parent).children;
    auto it = std::lower_bound(kids.begin(), kids.end(), token, sibling_less);
    if (it != kids.end() && it->first == token) return it->second;
  }
  if (node_count_ >= config_.max_nodes) return NodeId{};

  NodeId id;
  if (!free_list_.empty()) {
    id.index = free_list_.back();
    free_list_.pop_back();
  } else {
    id.index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
  }
  Node& fresh = nodes_[id.index];
  fresh.token = token;
  fresh.count = 0;
  fresh.terminal = 0;
  fresh.parent = parent;
  fresh.depth = nodes_[parent.index].depth + 1;
  fresh.alive = true;
  fresh.children.clear();

  auto& kids = nodes_[parent.index].children;
  auto it = std::lower_bound(kids.begin(), kids.end(), token, sibling_less);
  kids.insert(it, {token, id});
  ++node_count_;
  *created = true;
  return id;
}

void RolloutTree::free_node(NodeId id) {
  Node& n = nodes_[id.index];
  n.alive = false;
  n.children.clear();
  n.children.shrink_to_fit();
  n.count = 0;
  n.terminal = 0;
  free_list_.push_back(id.index);
  --node_count_;
}

void RolloutTree::unlink_child(NodeId parent, TokenId token) {
  auto& kids = node(parent).children;
  auto it = std::lower_bound(kids.begin(), kids.end(), token, sibling_less);
  if (it != kids.end() && it->first == token) kids.erase(it);
}

void RolloutTree::insert_window(std::span<const TokenId> window,
                                InsertStats& stats) {
  if (node_count_ >= config_.max_nodes) stats.nodes_evicted += evict();

  std::vector<NodeId> path;
  path.reserve(window.size());
  NodeId cur = root();
  for (std::size_t j = 0; j < window.size(); ++j) {
    bool created = false;
    NodeId next = find_or_create_child(cur, window[j], &created);
    if (!next.valid()) {
      stats.nodes_rejected += static_cast<std::int64_t>(window.size() - j);
      break;
    }
    if (created) ++stats.nodes_created;
    path.push_back(next);
    cur = next;
  }
  if (path.empty()) return;

  nodes_[0].count += 1;
  for (NodeId id : path) nodes_[id.index].count += 1;
  nodes_[path.back().index].terminal += 1;
  ++stats.paths_added;
}

InsertStats RolloutTree::insert_sequence(std::span<const TokenId> tokens) {
  if (tokens.empty()) {
    throw std::invalid_argument("insert_sequence requires a non-empty sequence");
  }
  for (TokenId t : tokens) check_token(t);

  InsertStats stats;
  const std::size_t depth = static_cast<std::size_t>(config_.max_depth);
  const std::size_t starts =
      config_.insert_mode == InsertMode::kAllSuffixes ? tokens.size() : 1;
  for (std::size_t i = 0; i < starts; ++i) {
    const std::size_t len = std::min(depth, tokens.size() - i);
    insert_window(tokens.subspan(i, len), stats);
  }
  return stats;
}

StreamCursor RolloutTree::open_stream() const {
  StreamCursor cursor;
  cursor.epoch = epoch_;
  return cursor;
}

StreamStatus RolloutTree::extend_stream(StreamCursor& cursor, TokenId token,
                                        InsertStats* stats) {
  check_token(token);
  InsertStats local;
  StreamStatus status = StreamStatus::kOk;
  if (cursor.epoch != epoch_) {
    cursor.active_paths.clear();
    cursor.epoch = epoch_;
    status = StreamStatus::kReset;
  }
  if (node_count_ >= config_.max_nodes) {
    const std::int64_t removed = evict();
    local.nodes_evicted += removed;
    if (removed > 0) {
      cursor.active_paths.clear();
      cursor.epoch = epoch_;
      status = StreamStatus::kReset;
    }
  }

  // Each open window moves its end marker one level down.
  std::vector<std::pair<NodeId, std::int32_t>> next_paths;
  next_paths.reserve(cursor.active_paths.size() + 1);
  for (const auto& [at, depth] : cursor.active_paths) {
    bool created = false;
    NodeId next = find_or_create_child(at, token, &created);
    if (!next.valid()) {
      ++local.nodes_rejected;
      continue;
    }
    if (created) ++local.nodes_created;
    nodes_[next.index].count += 1;
    nodes_[next.index].terminal += 1;
    nodes_[at.index].terminal -= 1;
    if (depth + 1 < config_.max_depth) next_paths.emplace_back(next, depth + 1);
  }

  const bool opens_window = config_.insert_mode == InsertMode::kAllSuffixes ||
                            cursor.position == 0;
  if (opens_window) {
    bool created = false;
    NodeId next = find_or_create_child(root(), token, &created);
    if (next.valid()) {
      if (created) ++local.nodes_created;
      nodes_[0].count += 1;
      nodes_[next.index].count += 1;
      nodes_[next.index].terminal += 1;
      ++local.paths_added;
      if (config_.max_depth > 1) next_paths.emplace_back(next, 1);
    } else {
      ++local.nodes_rejected;
    }
  }

  cursor.active_paths = std::move(next_paths);
  ++cursor.position;
  if (stats != nullptr) *stats += local;
  return status;
}

void RolloutTree::close_stream(StreamCursor& cursor) const {
  // End markers are already in place; only the cursor state is dropped.
  cursor.active_paths.clear();
  cursor.epoch = epoch_;
}

std::optional<SuffixMatch> RolloutTree::longest_suffix_match(
    std::span<const TokenId> context) const {
  const std::size_t longest =
      std::min(context.size(), static_cast<std::size_t>(config_.max_match_len));
  for (std::size_t q = longest; q >= 1; --q) {
    NodeId cur = root();
    bool ok = true;
    for (TokenId t : context.subspan(context.size() - q)) {
      cur = child(cur, t);
      if (!cur.valid()) {
        ok = false;
        break;
      }
    }
    if (ok && !nodes_[cur.index].children.empty()) {
      return SuffixMatch{cur, static_cast<std::int32_t>(q)};
    }
  }
  return std::nullopt;
}

Conditional RolloutTree::child_conditional(NodeId id) const {
  const Node& n = node(id);
  if (id == root()) {
    throw std::invalid_argument("child_conditional is undefined for the root");
  }
  Conditional c;
  c.count = n.count;
  for (const auto& [tok, sib] : nodes_[n.parent.index].children) {
    c.sibling_total += nodes_[sib.index].count;
  }
  return c;
}

DraftTree RolloutTree::assemble_draft(NodeId match_node,
                                      std::int32_t match_len) const {
  if (node(match_node).children.empty()) {
    throw std::invalid_argument("assemble_draft requires a node with children");
  }

  struct Candidate {
    double score;
    std::int32_t depth;
    std::vector<TokenId> path;
    NodeId source;
    std::int32_t parent;
  };
  // True when `a` ranks below `b`.
  auto lower_priority = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.path > b.path;
  };
  std::priority_queue<Candidate, std::vector<Candidate>,
                      decltype(lower_priority)>
      frontier(lower_priority);

  auto push_children = [&](NodeId from, double score, std::int32_t depth,
                           const std::vector<TokenId>& path,
                           std::int32_t draft_index) {
    const Node& n = nodes_[from.index];
    std::uint64_t total = 0;
    for (const auto& [tok, kid] : n.children) total += nodes_[kid.index].count;
    for (const auto& [tok, kid] : n.children) {
      const Conditional c{nodes_[kid.index].count, total};
      Candidate cand{score * c.value(), depth + 1, path, kid, draft_index};
      cand.path.push_back(tok);
      frontier.push(std::move(cand));
    }
  };

  DraftTree draft;
  draft.root_context_len = match_len;
  const std::int32_t budget = config_.budget(match_len);
  push_children(match_node, 1.0, 0, {}, -1);
  while (static_cast<std::int32_t>(draft.nodes.size()) < budget &&
         !frontier.empty()) {
    if (frontier.top().score < config_.min_path_score) break;
    Candidate best = frontier.top();
    frontier.pop();
    const auto index = static_cast<std::int32_t>(draft.nodes.size());
    draft.nodes.push_back(DraftNode{best.path.back(), best.parent, best.depth,
                                    best.score, best.source});
    push_children(best.source, best.score, best.depth, best.path, index);
  }
  return draft;
}

void RolloutTree::collect_subtree(NodeId id, std::vector<NodeId>& out) const {
  out.push_back(id);
  for (const auto& [tok, kid] : nodes_[id.index].children) {
    collect_subtree(kid, out);
  }
}

std::int64_t RolloutTree::evict() {
  if (node_count_ < config_.max_nodes) return 0;
  const std::int64_t target =
      static_cast<std::int64_t>(config_.max_nodes) * 9 / 10;

  // Ascending count, deeper first, then token and arena slot.
  using Key = std::tuple<std::uint64_t, std::int32_t, TokenId, std::int32_t>;
  auto key_of = [this](NodeId id) {
    const Node& n = nodes_[id.index];
    return Key{n.count, -n.depth, n.token, id.index};
  };
  std::set<Key> order;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (nodes_[i].alive) order.insert(key_of(NodeId{static_cast<int>(i)}));
  }

  std::int64_t removed = 0;
  std::vector<NodeId> doomed;
  while (node_count_ > target && !order.empty()) {
    const NodeId victim{std::get<3>(*order.begin())};
    const std::uint64_t mass = nodes_[victim.index].count;
    NodeId up = nodes_[victim.index].parent;

    doomed.clear();
    collect_subtree(victim, doomed);
    unlink_child(up, nodes_[victim.index].token);
    for (NodeId id : doomed) {
      order.erase(key_of(id));
      free_node(id);
      ++removed;
    }

    // Take the removed mass off every ancestor; ancestors left empty go too.
    while (up != root()) {
      Node& anc = nodes_[up.index];
      order.erase(key_of(up));
      anc.count -= mass;
      const NodeId next = anc.parent;
      if (anc.count == 0) {
        unlink_child(next, anc.token);
        free_node(up);
        ++removed;
      } else {
        order.insert(key_of(up));
      }
      up = next;
    }
    nodes_[0].count -= mass;
  }
  if (removed > 0) ++epoch_;
  return removed;
}

std::uint64_t RolloutTree::decay_subtree(NodeId id, double factor) {
  Node& n = nodes_[id.index];
  n.terminal =
      static_cast<std::uint64_t>(std::floor(static_cast<double>(n.terminal) *
                                            factor));
  std::uint64_t total = n.terminal;
  auto kids = n.children;  // copy: recursion may free entries
  for (const auto& [tok, kid] : kids) {
    const std::uint64_t c = decay_subtree(kid, factor);
    if (c == 0) {
      unlink_child(id, tok);
      free_node(kid);
    }
    total += c;
  }
  nodes_[id.index].count = total;
  return total;
}

void RolloutTree::decay(double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) {
    throw std::invalid_argument("decay factor must lie in (0, 1]");
  }
  if (factor == 1.0) return;
  const std::int32_t before = node_count_;
  decay_subtree(root(), factor);
  if (node_count_ != before) ++epoch_;
}

std::uint64_t RolloutTree::count(NodeId id) const { return node(id).count; }

std::uint64_t RolloutTree::terminal(NodeId id) const {
  return node(id).terminal;
}

TokenId RolloutTree::token(NodeId id) const { return node(id).token; }

NodeId RolloutTree::parent(NodeId id) const { return node(id).parent; }

std::int32_t RolloutTree::depth(NodeId id) const { return node(id).depth; }

std::span<const std::pair<TokenId, NodeId>> RolloutTree::children(
    NodeId id) const {
  return node(id).children;
}

NodeId RolloutTree::child(NodeId id, TokenId token) const {
  const auto& kids = node(id).children;
  auto it = std::lower_bound(kids.begin(), kids.end(), token, sibling_less);
  if (it != kids.end() && it->first == token) return it->second;
  return NodeId{};
}

std::optional<NodeId> RolloutTree::find_path(
    std::span<const TokenId> path) const {
  NodeId cur = root();
  for (TokenId t : path) {
    cur = child(cur, t);
    if (!cur.valid()) return std::nullopt;
  }
  return cur;
}

std::vector<TokenId> RolloutTree::path_to(NodeId id) const {
  std::vector<TokenId> path;
  for (NodeId cur = id; cur != root(); cur = node(cur).parent) {
    path.push_back(node(cur).token);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::string RolloutTree::check_invariants() const {
  std::ostringstream err;
  std::int64_t reachable = 0;
  std::function<bool(NodeId)> visit = [&](NodeId id) -> bool {
    const Node& n = nodes_[id.index];
    ++reachable;
    if (!n.alive) {
      err << "dead node " << id.index << " is reachable";
      return false;
    }
    if (id != root() && n.count < 1) {
      err << "node " << id.index << " has zero count";
      return false;
    }
    if (n.depth > config_.max_depth) {
      err << "node " << id.index << " deeper than max_depth";
      return false;
    }
    std::uint64_t sum = n.terminal;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const auto& [tok, kid] = n.children[i];
      if (i > 0 && n.children[i - 1].first >= tok) {
        err << "children of node " << id.index << " not strictly sorted";
        return false;
      }
      const Node& k = nodes_[kid.index];
      if (k.parent != id || k.token != tok || k.depth != n.depth + 1) {
        err << "child link " << id.index << " -> " << kid.index
            << " inconsistent";
        return false;
      }
      sum += k.count;
    }
    if (sum != n.count) {
      err << "node " << id.index << " count " << n.count
          << " != terminal + children " << sum;
      return false;
    }
    for (const auto& [tok, kid] : n.children) {
      if (!visit(kid)) return false;
    }
    return true;
  };
  if (!visit(root())) return err.str();
  if (reachable != node_count_) {
    err << "node_count " << node_count_ << " but " << reachable
        << " reachable";
    return err.str();
  }
  if (node_count_ > config_.max_nodes) {
    err << "node_count " << node_count_ << " exceeds max_nodes";
    return err.str();
  }
  return {};
}

std::string RolloutTree::snapshot() const {
  using internal::format_double;
  std::ostringstream out;
  out << kSnapshotMagic << ' ' << kSnapshotVersion << '\n';
  out << "prompt " << prompt_id_ << '\n';
  out << "config vocab_size=" << config_.vocab_size
      << " max_depth=" << config_.max_depth
      << " max_nodes=" << config_.max_nodes
      << " max_match_len=" << config_.max_match_len
      << " budget_base=" << config_.budget_base
      << " budget_slope=" << format_double(config_.budget_slope)
      << " budget_max=" << config_.budget_max
      << " min_path_score=" << format_double(config_.min_path_score)
      << " decay=" << format_double(config_.decay)
      << " insert_mode=" << insert_mode_name(config_.insert_mode) << '\n';
  out << "nodes " << node_count_ << '\n';
  std::function<void(NodeId)> emit = [&](NodeId id) {
    const Node& n = nodes_[id.index];
    out << n.token << ' ' << n.count << ' ' << n.children.size() << '\n';
    for (const auto& [tok, kid] : n.children) emit(kid);
  };
  emit(root());
  return out.str();
}

RolloutTree RolloutTree::from_snapshot(const std::string& text) {
  using internal::parse_number;
  std::istringstream in(text);
  std::string line;
  auto next_line = [&](std::string_view what) {
    if (!std::getline(in, line)) {
      throw std::invalid_argument("tree snapshot truncated before " +
                                  std::string(what));
    }
    return std::istringstream(line);
  };

  {
    auto header = next_line("header");
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kSnapshotMagic || version != kSnapshotVersion) {
      throw std::invalid_argument("unsupported tree snapshot header: " + line);
    }
  }
  std::string prompt_id;
  {
    next_line("prompt");
    if (line.rfind("prompt ", 0) != 0) {
      throw std::invalid_argument("expected prompt line, got: " + line);
    }
    prompt_id = line.substr(7);
  }
  TreeConfig config;
  {
    auto fields = next_line("config");
    std::string word;
    fields >> word;
    if (word != "config") {
      throw std::invalid_argument("expected config line, got: " + line);
    }
    while (fields >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument("malformed config field: " + word);
      }
      const std::string key = word.substr(0, eq);
      const std::string_view value = std::string_view(word).substr(eq + 1);
      if (key == "vocab_size") {
        config.vocab_size = parse_number<std::int32_t>(value, key);
      } else if (key == "max_depth") {
        config.max_depth = parse_number<std::int32_t>(value, key);
      } else if (key == "max_nodes") {
        config.max_nodes = parse_number<std::int32_t>(value, key);
      } else if (key == "max_match_len") {
        config.max_match_len = parse_number<std::int32_t>(value, key);
      } else if (key == "budget_base") {
        config.budget_base = parse_number<std::int32_t>(value, key);
      } else if (key == "budget_slope") {
        config.budget_slope = parse_number<double>(value, key);
      } else if (key == "budget_max") {
        config.budget_max = parse_number<std::int32_t>(value, key);
      } else if (key == "min_path_score") {
        config.min_path_score = parse_number<double>(value, key);
      } else if (key == "decay") {
        config.decay = parse_number<double>(value, key);
      } else if (key == "insert_mode") {
        config.insert_mode = parse_insert_mode(value);
      } else {
        throw std::invalid_argument("unknown config field: " + key);
      }
    }
  }
  std::int64_t expected_nodes = 0;
  {
    auto fields = next_line("node count");
    std::string word;
    fields >> word >> expected_nodes;
    if (word != "nodes" || expected_nodes < 1) {
      throw std::invalid_argument("expected node count line, got: " + line);
    }
  }

  RolloutTree tree(prompt_id, config);
  if (expected_nodes > config.max_nodes) {
    throw std::invalid_argument("snapshot holds more nodes than max_nodes");
  }
  // (node, children still to read)
  std::vector<std::pair<NodeId, std::int64_t>> stack;
  for (std::int64_t i = 0; i < expected_nodes; ++i) {
    auto fields = next_line("node record");
    std::int64_t tok = 0, children = 0;
    std::uint64_t count = 0;
    if (!(fields >> tok >> count >> children) || children < 0) {
      throw std::invalid_argument("malformed node record: " + line);
    }
    NodeId id;
    if (i == 0) {
      if (tok != -1) throw std::invalid_argument("root record must use -1");
      id = tree.root();
    } else {
      while (!stack.empty() && stack.back().second == 0) stack.pop_back();
      if (stack.empty()) {
        throw std::invalid_argument("node record without a parent: " + line);
      }
      tree.check_token(static_cast<TokenId>(tok));
      --stack.back().second;
      bool created = false;
      id = tree.find_or_create_child(stack.back().first,
                                     static_cast<TokenId>(tok), &created);
      if (!created) {
        throw std::invalid_argument("duplicate child in snapshot: " + line);
      }
    }
    tree.nodes_[id.index].count = count;
    stack.emplace_back(id, children);
  }
  while (!stack.empty() && stack.back().second == 0) stack.pop_back();
  if (!stack.empty()) {
    throw std::invalid_argument("tree snapshot truncated inside a subtree");
  }

  // Terminal counts are implied by count minus the children's counts.
  for (auto& n : tree.nodes_) {
    if (!n.alive) continue;
    std::uint64_t kids = 0;
    for (const auto& [tok, kid] : n.children) kids += tree.nodes_[kid.index].count;
    if (kids > n.count) {
      throw std::invalid_argument("snapshot child counts exceed parent count");
    }
    n.terminal = n.count - kids;
  }
  return tree;
}

}  // namespace srt
