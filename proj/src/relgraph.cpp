// SPDX-License-Identifier: Apache-2.0
#include "lgspf/relgraph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "lgspf/rng.hpp"

namespace lgspf::graph {

RelationalGraph::RelationalGraph(Matrix features, std::vector<Label> labels,
                                 std::vector<Relation> relations,
                                 std::vector<std::vector<Edge>> edges)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      relations_(std::move(relations)),
      edges_(std::move(edges)) {
  if (features_.rows() != labels_.size()) {
    throw Error("RelationalGraph: " + std::to_string(features_.rows()) +
                " feature rows but " + std::to_string(labels_.size()) + " labels");
  }
  if (edges_.size() != relations_.size()) {
    throw Error("RelationalGraph: " + std::to_string(relations_.size()) +
                " relations but " + std::to_string(edges_.size()) + " edge lists");
  }
  const std::size_t n = labels_.size();
  for (std::size_t r = 0; r < relations_.size(); ++r) {
    if (relations_[r].id != r) {
      throw Error("RelationalGraph: relation ids must be dense 0..m-1; position " +
                  std::to_string(r) + " has id " + std::to_string(relations_[r].id));
    }
    auto& list = edges_[r];
    for (Edge& e : list) {
      if (e.src >= n || e.dst >= n) {
        throw Error("RelationalGraph: relation '" + relations_[r].name + "' edge (" +
                    std::to_string(e.src) + ", " + std::to_string(e.dst) +
                    ") references a node outside 0.." + std::to_string(n - 1));
      }
      if (e.src == e.dst) {
        throw Error("RelationalGraph: relation '" + relations_[r].name +
                    "' stores a self edge at node " + std::to_string(e.src) +
                    "; self-loops are a per-relation flag");
      }
      if (!relations_[r].directed && e.src > e.dst) std::swap(e.src, e.dst);
    }
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

std::size_t RelationalGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& e : edges_) total += e.size();
  return total;
}

std::vector<NodeId> RelationalGraph::labeled_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t v = 0; v < labels_.size(); ++v) {
    if (is_labeled(labels_[v])) out.push_back(static_cast<NodeId>(v));
  }
  return out;
}

std::size_t RelationalGraph::count_label(Label l) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), l));
}

SubgraphView SubgraphView::from_lists(std::size_t relation_id,
                                      const std::vector<std::vector<NodeId>>& lists,
                                      bool self_loops) {
  SubgraphView view;
  view.relation_id_ = relation_id;
  view.directed_ = true;
  view.self_loops_ = self_loops;
  const std::size_t n = lists.size();
  view.offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) view.offsets_[v + 1] = view.offsets_[v] + lists[v].size();
  view.neighbors_.reserve(view.offsets_[n]);
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<NodeId> sorted = lists[v];
    std::sort(sorted.begin(), sorted.end());
    for (NodeId u : sorted) {
      if (u >= n) {
        throw Error("SubgraphView: neighbor " + std::to_string(u) + " of node " +
                    std::to_string(v) + " is out of range");
      }
      view.neighbors_.push_back(u);
      if (u != v || !self_loops) view.edges_.push_back({u, static_cast<NodeId>(v)});
    }
  }
  return view;
}

std::vector<SubgraphView> partition_relations(const RelationalGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<SubgraphView> views;
  views.reserve(graph.relation_count());
  for (std::size_t r = 0; r < graph.relation_count(); ++r) {
    const Relation& rel = graph.relation(r);
    SubgraphView view;
    view.relation_id_ = r;
    view.directed_ = rel.directed;
    view.edges_ = graph.edges(r);

    std::vector<std::size_t> degree(n, 0);
    for (const Edge& e : view.edges_) {
      ++degree[e.dst];
      if (!rel.directed) ++degree[e.src];
    }
    view.offsets_.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) view.offsets_[v + 1] = view.offsets_[v] + degree[v];
    view.neighbors_.resize(view.offsets_[n]);
    std::vector<std::size_t> cursor(view.offsets_.begin(), view.offsets_.end() - 1);
    for (const Edge& e : view.edges_) {
      view.neighbors_[cursor[e.dst]++] = e.src;
      if (!rel.directed) view.neighbors_[cursor[e.src]++] = e.dst;
    }
    for (std::size_t v = 0; v < n; ++v) {
      std::sort(view.neighbors_.begin() + static_cast<std::ptrdiff_t>(view.offsets_[v]),
                view.neighbors_.begin() + static_cast<std::ptrdiff_t>(view.offsets_[v + 1]));
    }
    views.push_back(std::move(view));
  }
  return views;
}

SubgraphView add_self_loops(const SubgraphView& view) {
  if (view.self_loops_) {
    throw Error("add_self_loops: relation " + std::to_string(view.relation_id_) +
                " already carries self-loops");
  }
  const std::size_t n = view.node_count();
  SubgraphView out;
  out.relation_id_ = view.relation_id_;
  out.directed_ = view.directed_;
  out.self_loops_ = true;
  out.edges_ = view.edges_;
  out.offsets_.assign(n + 1, 0);
  out.neighbors_.reserve(view.neighbors_.size() + n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto nb = view.neighbors(static_cast<NodeId>(v));
    const auto self = static_cast<NodeId>(v);
    auto pos = std::lower_bound(nb.begin(), nb.end(), self);
    out.neighbors_.insert(out.neighbors_.end(), nb.begin(), pos);
    out.neighbors_.push_back(self);
    out.neighbors_.insert(out.neighbors_.end(), pos, nb.end());
    out.offsets_[v + 1] = out.neighbors_.size();
  }
  return out;
}

std::vector<SubgraphView> prepare_views(const RelationalGraph& graph) {
  auto views = partition_relations(graph);
  for (std::size_t r = 0; r < views.size(); ++r) {
    if (graph.relation(r).self_loops) views[r] = add_self_loops(views[r]);
  }
  return views;
}

SplitMasks stratified_split(const RelationalGraph& graph, SplitRatios ratios,
                            std::uint64_t seed) {
  const std::array<double, 3> share{ratios.train, ratios.val, ratios.test};
  for (double s : share) {
    if (!(s > 0.0)) throw Error("stratified_split: split ratios must be positive");
  }
  if (std::abs(share[0] + share[1] + share[2] - 1.0) > 1e-9) {
    throw Error("stratified_split: split ratios must sum to 1");
  }

  SplitMasks masks;
  masks.seed = seed;
  std::array<std::vector<NodeId>*, 3> outs{&masks.train, &masks.val, &masks.test};
  Rng rng(seed);
  for (Label cls : {Label::kNormal, Label::kFraud}) {
    std::vector<NodeId> members;
    for (std::size_t v = 0; v < graph.node_count(); ++v) {
      if (graph.label(static_cast<NodeId>(v)) == cls) members.push_back(static_cast<NodeId>(v));
    }
    if (members.size() < share.size()) {
      throw Error("stratified_split: class " +
                  std::string(cls == Label::kFraud ? "fraud" : "normal") + " has " +
                  std::to_string(members.size()) + " labeled nodes, need at least " +
                  std::to_string(share.size()));
    }
    rng.shuffle(members);

    // Largest-remainder quotas; ties go to the earlier split.
    const double total = static_cast<double>(members.size());
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double exact = share[i] * total;
      quota[i] = static_cast<std::size_t>(std::floor(exact));
      frac[i] = exact - static_cast<double>(quota[i]);
      assigned += quota[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < members.size(); ++i, ++assigned) ++quota[order[i % 3]];

    std::size_t cursor = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      outs[i]->insert(outs[i]->end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                      members.begin() + static_cast<std::ptrdiff_t>(cursor + quota[i]));
      cursor += quota[i];
    }
  }
  for (auto* out : outs) std::sort(out->begin(), out->end());
  return masks;
}

}  // namespace lgspf::graph
