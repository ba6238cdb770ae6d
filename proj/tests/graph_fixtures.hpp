// SPDX-License-Identifier: Apache-2.0
#pragma once

// Random graph builders shared by the graph-level tests.

#include <string>
#include <vector>

#include "lgspf/relgraph.hpp"
#include "lgspf/rng.hpp"

namespace lgspf::testing {

// n nodes, m relations with random direction, each ordered pair present with
// probability p; features uniform in [-1, 1]; labels alternate with a few
// unlabeled nodes.
inline graph::RelationalGraph random_graph(Rng& rng, std::size_t n, std::size_t m, double p,
                                           std::size_t feature_dim = 3) {
  using namespace graph;
  Matrix x(n, feature_dim);
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  std::vector<Label> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double u = rng.uniform();
    labels[v] = u < 0.1 ? Label::kUnlabeled : (u < 0.4 ? Label::kFraud : Label::kNormal);
  }
  std::vector<Relation> rels;
  std::vector<std::vector<Edge>> edges(m);
  for (std::size_t r = 0; r < m; ++r) {
    rels.push_back({r, "rel" + std::to_string(r), "relation " + std::to_string(r),
                    rng.bernoulli(0.5), false});
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b && rng.bernoulli(p)) {
          edges[r].push_back({static_cast<NodeId>(a), static_cast<NodeId>(b)});
        }
      }
    }
  }
  return RelationalGraph(std::move(x), std::move(labels), std::move(rels), std::move(edges));
}

}  // namespace lgspf::testing
