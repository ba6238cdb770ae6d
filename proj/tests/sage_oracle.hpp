// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference GraphSAGE + MLP classifier used to confirm that a synthetic graph
// carries a recoverable fraud signal. Aggregation uses dense row-normalized
// adjacency matrices built straight from the edge lists, so it shares no code
// with the encoder module.

#include <cmath>
#include <vector>

#include "lgspf/autodiff.hpp"
#include "lgspf/relgraph.hpp"
#include "lgspf/rng.hpp"

namespace lgspf::testing {

// Probability that a random positive outscores a random negative, ties 1/2.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

struct OracleResult {
  double best_val_auc = 0.0;
  double test_auc = 0.0;
};

inline Matrix dense_mean_operator(const graph::RelationalGraph& g, std::size_t r) {
  const std::size_t n = g.node_count();
  Matrix a(n, n);
  for (const auto& e : g.edges(r)) {
    a(e.dst, e.src) = 1.0;
    if (!g.relation(r).directed) a(e.src, e.dst) = 1.0;
  }
  if (g.relation(r).self_loops) {
    for (std::size_t v = 0; v < n; ++v) a(v, v) = 1.0;
  }
  for (std::size_t v = 0; v < n; ++v) {
    double deg = 0.0;
    for (std::size_t u = 0; u < n; ++u) deg += a(v, u);
    if (deg > 0.0) {
      for (std::size_t u = 0; u < n; ++u) a(v, u) /= deg;
    }
  }
  return a;
}

// Full-batch training with plain Adam; returns the test AUC at the epoch of
// best validation AUC.
inline OracleResult sage_mlp_oracle(const graph::RelationalGraph& g, const graph::SplitMasks& split,
                                    std::uint64_t seed, std::size_t hidden = 16,
                                    std::size_t epochs = 300, double lr = 0.01) {
  Rng rng(seed);
  const std::size_t d = g.feature_dim(), m = g.relation_count();
  std::vector<Matrix> ops;
  for (std::size_t r = 0; r < m; ++r) ops.push_back(dense_mean_operator(g, r));

  std::vector<Parameter> params;
  for (std::size_t r = 0; r < m; ++r) {
    params.emplace_back("w1", glorot_uniform(hidden, 2 * d, rng), true);
    params.emplace_back("w2", glorot_uniform(hidden, 2 * hidden, rng), true);
  }
  params.emplace_back("u1", glorot_uniform(32, m * hidden, rng), true);
  params.emplace_back("b1", Matrix(1, 32), true);
  params.emplace_back("u2", glorot_uniform(2, 32, rng), true);
  params.emplace_back("b2", Matrix(1, 2), true);

  auto forward = [&](ad::Tape& t) {
    ad::Var x = t.constant(g.features());
    std::vector<ad::Var> parts;
    for (std::size_t r = 0; r < m; ++r) {
      ad::Var p = t.constant(ops[r]);
      ad::Var h = ad::elu(ad::matmul_nt(ad::concat_cols(x, ad::matmul(p, x)), t.parameter(params[2 * r])));
      h = ad::elu(ad::matmul_nt(ad::concat_cols(h, ad::matmul(p, h)), t.parameter(params[2 * r + 1])));
      parts.push_back(h);
    }
    const std::size_t base = 2 * m;
    ad::Var z = ad::elu(ad::add_row(ad::matmul_nt(ad::concat_cols(parts), t.parameter(params[base])),
                                    t.parameter(params[base + 1])));
    return ad::add_row(ad::matmul_nt(z, t.parameter(params[base + 2])), t.parameter(params[base + 3]));
  };
  auto auc_on = [&](const Matrix& logits, const std::vector<graph::NodeId>& nodes) {
    std::vector<double> s;
    std::vector<int> y;
    for (auto v : nodes) {
      s.push_back(logits(v, 1) - logits(v, 0));
      y.push_back(g.label(v) == graph::Label::kFraud ? 1 : 0);
    }
    return pairwise_auc(s, y);
  };

  std::vector<Matrix> m1, m2;
  for (auto& p : params) {
    m1.emplace_back(p.value.rows(), p.value.cols());
    m2.emplace_back(p.value.rows(), p.value.cols());
  }
  std::vector<std::size_t> train_rows(split.train.begin(), split.train.end());
  std::vector<std::size_t> targets;
  for (auto v : split.train) targets.push_back(g.label(v) == graph::Label::kFraud ? 1 : 0);

  OracleResult best;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    for (auto& p : params) p.zero_grad();
    {
      ad::Tape t;
      ad::Var logits = forward(t);
      ad::Var ll = ad::log_softmax_pick(ad::gather_rows(logits, train_rows), targets);
      t.backward(ad::scale(ll, -1.0 / static_cast<double>(train_rows.size())));
    }
    const double b1 = 0.9, b2 = 0.999;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double gk = p.grad.data()[k];
        double& mk = m1[i].data()[k];
        double& vk = m2[i].data()[k];
        mk = b1 * mk + (1 - b1) * gk;
        vk = b2 * vk + (1 - b2) * gk * gk;
        const double mh = mk / (1 - std::pow(b1, static_cast<double>(epoch)));
        const double vh = vk / (1 - std::pow(b2, static_cast<double>(epoch)));
        p.value.data()[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    if (epoch % 10 == 0) {
      ad::Tape t;
      const Matrix logits = forward(t).value();
      const double val = auc_on(logits, split.val);
      if (val > best.best_val_auc) {
        best.best_val_auc = val;
        best.test_auc = auc_on(logits, split.test);
      }
    }
  }
  return best;
}

}  // namespace lgspf::testing
