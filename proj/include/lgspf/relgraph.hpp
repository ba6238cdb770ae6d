// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-relational graph model: one node set, numeric features, three-state
// labels, and an edge list per relation. Relations are separated into
// per-relation neighbor views for message passing.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lgspf/tensor.hpp"

namespace lgspf::graph {

using NodeId = std::uint32_t;

enum class Label : std::int8_t { kUnlabeled = -1, kNormal = 0, kFraud = 1 };

inline bool is_labeled(Label l) { return l != Label::kUnlabeled; }

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  auto operator<=>(const Edge&) const = default;
};

struct Relation {
  std::size_t id = 0;
  std::string name;
  std::string description;
  bool directed = false;
  // Whether message passing adds each node to its own neighborhood.
  bool self_loops = false;

  bool operator==(const Relation&) const = default;
};

class RelationalGraph {
 public:
  RelationalGraph() = default;
  // Validates endpoints and relation ids, canonicalizes undirected edges to
  // (min, max) and removes duplicates. Throws Error on any violation.
  RelationalGraph(Matrix features, std::vector<Label> labels,
                  std::vector<Relation> relations, std::vector<std::vector<Edge>> edges);

  std::size_t node_count() const { return labels_.size(); }
  std::size_t feature_dim() const { return features_.cols(); }
  std::size_t relation_count() const { return relations_.size(); }

  const Matrix& features() const { return features_; }
  const std::vector<Label>& labels() const { return labels_; }
  Label label(NodeId v) const { return labels_[v]; }
  const std::vector<Relation>& relations() const { return relations_; }
  const Relation& relation(std::size_t r) const { return relations_.at(r); }
  const std::vector<Edge>& edges(std::size_t r) const { return edges_.at(r); }
  std::size_t edge_count() const;

  std::vector<NodeId> labeled_nodes() const;
  std::size_t count_label(Label l) const;

  bool operator==(const RelationalGraph&) const = default;

 private:
  Matrix features_;
  std::vector<Label> labels_;
  std::vector<Relation> relations_;
  std::vector<std::vector<Edge>> edges_;
};

// Neighborhood structure of one relation in CSR form. Lists are sorted by
// ascending node id, which fixes the summation order of every aggregation.
class SubgraphView {
 public:
  SubgraphView() = default;
  // Builds lists from per-node neighbor sets (any order); for tests and
  // hand-built views. Throws on out-of-range ids.
  static SubgraphView from_lists(std::size_t relation_id,
                                 const std::vector<std::vector<NodeId>>& lists,
                                 bool self_loops = false);

  std::size_t relation_id() const { return relation_id_; }
  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  bool directed() const { return directed_; }
  bool self_loops() const { return self_loops_; }
  // The relation's stored edge list (no self-loops).
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  std::size_t adjacency_size() const { return neighbors_.size(); }

 private:
  friend std::vector<SubgraphView> partition_relations(const RelationalGraph& graph);
  friend SubgraphView add_self_loops(const SubgraphView& view);

  std::size_t relation_id_ = 0;
  bool directed_ = false;
  bool self_loops_ = false;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> neighbors_;
};

// One view per relation. Undirected relations expand to symmetric lists;
// directed relations keep in-neighbors (u -> v puts u in v's list).
std::vector<SubgraphView> partition_relations(const RelationalGraph& graph);

// Inserts v into its own list for every node. Rejects views that already
// carry self-loops.
SubgraphView add_self_loops(const SubgraphView& view);

// partition_relations followed by add_self_loops where the relation asks for it.
std::vector<SubgraphView> prepare_views(const RelationalGraph& graph);

struct SplitRatios {
  double train = 0.4;
  double val = 0.2;
  double test = 0.4;
};

struct SplitMasks {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
  std::uint64_t seed = 0;

  bool operator==(const SplitMasks&) const = default;
};

// Per-class split of the labeled nodes. Each class is shuffled with `seed`
// and cut by largest-remainder quotas, so every split holds within one node
// of its exact share of every class. Output lists are sorted.
SplitMasks stratified_split(const RelationalGraph& graph, SplitRatios ratios,
                            std::uint64_t seed);

}  // namespace lgspf::graph
