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

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace srt {

using TokenId = std::int32_t;

// Handle into a RolloutTree node arena. Handles are invalidated by eviction
// and decay; RolloutTree::epoch() changes whenever that can happen.
struct NodeId {
  std::int32_t index = -1;

  bool valid() const { return index >= 0; }
  auto operator<=>(const NodeId&) const = default;
};

enum class InsertMode {
  // Every substring of length <= max_depth is indexed from the root.
  kAllSuffixes,
  // Only the first max_depth tokens of each sequence hang off the root.
  kRootPathOnly,
};

std::string_view insert_mode_name(InsertMode mode);
InsertMode parse_insert_mode(std::string_view name);

struct TreeConfig {
  std::int32_t vocab_size = 1 << 20;
  std::int32_t max_depth = 16;
  std::int32_t max_nodes = 1 << 16;
  std::int32_t max_match_len = 8;
  std::int32_t budget_base = 4;
  double budget_slope = 2.0;
  std::int32_t budget_max = 32;
  double min_path_score = 0.0;
  // Multiplicative count decay applied by RolloutTree::decay(); 1.0 is off.
  double decay = 1.0;
  InsertMode insert_mode = InsertMode::kAllSuffixes;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  // B(q) = min(budget_max, budget_base + floor(budget_slope * q)).
  std::int32_t budget(std::int32_t match_len) const;
};

struct InsertStats {
  std::int64_t paths_added = 0;
  std::int64_t nodes_created = 0;
  std::int64_t nodes_rejected = 0;
  std::int64_t nodes_evicted = 0;

  InsertStats& operator+=(const InsertStats& other);
};

struct StreamCursor {
  // (node, depth) of every open suffix window.
  std::vector<std::pair<NodeId, std::int32_t>> active_paths;
  std::uint64_t epoch = 0;
  std::int64_t position = 0;
};

enum class StreamStatus {
  kOk,
  // The tree was pruned since the cursor was last used; open windows were
  // dropped and the token was inserted as the start of a fresh window.
  kReset,
};

struct SuffixMatch {
  NodeId node;
  std::int32_t length = 0;
};

// Exact empirical conditional C(v) = count(v) / sum of sibling counts.
struct Conditional {
  std::uint64_t count = 0;
  std::uint64_t sibling_total = 0;

  double value() const {
    return static_cast<double>(count) / static_cast<double>(sibling_total);
  }
};

struct DraftNode {
  TokenId token = 0;
  std::int32_t parent = -1;  // index into DraftTree::nodes, -1 for the root
  std::int32_t depth = 1;
  double path_score = 1.0;
  NodeId source;
};

// Candidate continuations below a matched context. Nodes are stored in the
// order they were selected, so parents always precede their children.
struct DraftTree {
  std::int32_t root_context_len = 0;
  std::vector<DraftNode> nodes;

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }
  // Index of the child of `parent` labelled `token`, or -1.
  std::int32_t find_child(std::int32_t parent, TokenId token) const;
  std::int32_t max_depth() const;
};

// Per-prompt count-annotated trie over token ids.
//
// Every node stores count(u), the number of indexed windows passing through
// it, and terminal(u), the number of windows ending at it, so that
// count(u) == terminal(u) + sum of children counts at all times. For nodes
// where no window ends this is exactly the sum-of-children rule.
class RolloutTree {
 public:
  RolloutTree(std::string prompt_id, TreeConfig config);

  const std::string& prompt_id() const { return prompt_id_; }
  const TreeConfig& config() const { return config_; }
  NodeId root() const { return NodeId{0}; }
  std::int32_t node_count() const { return node_count_; }
  std::uint64_t epoch() const { return epoch_; }

  InsertStats insert_sequence(std::span<const TokenId> tokens);

  StreamCursor open_stream() const;
  StreamStatus extend_stream(StreamCursor& cursor, TokenId token,
                             InsertStats* stats = nullptr);
  void close_stream(StreamCursor& cursor) const;

  // Largest q <= min(|context|, max_match_len) such that the last q tokens
  // spell a path from the root ending at a node with at least one child.
  std::optional<SuffixMatch> longest_suffix_match(
      std::span<const TokenId> context) const;

  Conditional child_conditional(NodeId node) const;

  // Best-first expansion below `match_node` by path product of child
  // conditionals, up to B(q) nodes. Ties prefer higher score, then deeper
  // nodes, then the lexicographically smaller token path.
  DraftTree assemble_draft(NodeId match_node, std::int32_t match_len) const;

  // Prunes lowest-count subtrees (ties: deeper first) once the tree is at
  // capacity, until node_count <= floor(0.9 * max_nodes). Returns the number
  // of nodes removed.
  std::int64_t evict();

  // Scales terminal counts by `factor` (floored) and drops emptied nodes.
  void decay(double factor);

  // Node accessors. `node` must be live.
  std::uint64_t count(NodeId node) const;
  std::uint64_t terminal(NodeId node) const;
  TokenId token(NodeId node) const;
  NodeId parent(NodeId node) const;
  std::int32_t depth(NodeId node) const;
  std::span<const std::pair<TokenId, NodeId>> children(NodeId node) const;
  NodeId child(NodeId node, TokenId token) const;
  std::optional<NodeId> find_path(std::span<const TokenId> path) const;
  std::vector<TokenId> path_to(NodeId node) const;

  // Returns an empty string when every structural invariant holds, otherwise
  // a description of the first violation.
  std::string check_invariants() const;

  // Versioned text snapshot: header lines then one preorder line per node of
  // `token count child_count`, children in ascending token order.
  std::string snapshot() const;
  static RolloutTree from_snapshot(const std::string& text);

 private:
  struct Node {
    TokenId token = -1;
    std::uint64_t count = 0;
    std::uint64_t terminal = 0;
    NodeId parent;
    std::int32_t depth = 0;
    bool alive = false;
    // Sorted by token.
    std::vector<std::pair<TokenId, NodeId>> children;
  };

  const Node& node(NodeId id) const;
  Node& node(NodeId id);
  void check_token(TokenId token) const;
  // Returns an invalid id when the tree is full.
  NodeId find_or_create_child(NodeId parent, TokenId token, bool* created);
  void free_node(NodeId id);
  void collect_subtree(NodeId id, std::vector<NodeId>& out) const;
  void unlink_child(NodeId parent, TokenId token);
  void insert_window(std::span<const TokenId> window, InsertStats& stats);
  std::uint64_t decay_subtree(NodeId id, double factor);

  std::string prompt_id_;
  TreeConfig config_;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> free_list_;
  std::int32_t node_count_ = 1;
  std::uint64_t epoch_ = 0;
};

}  // namespace srt
