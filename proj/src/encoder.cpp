// SPDX-License-Identifier: Apache-2.0
#include "lgspf/encoder.hpp"

#include "lgspf/kernels.hpp"

namespace lgspf::encoder {

using graph::NodeId;
using graph::SubgraphView;

void EncoderConfig::validate() const {
  if (hidden_dims.empty()) throw Error("EncoderConfig: depth must be at least 1");
  for (std::size_t w : hidden_dims) {
    if (w == 0) throw Error("EncoderConfig: layer widths must be positive");
  }
  if (!(elu_alpha > 0.0)) throw Error("EncoderConfig: elu_alpha must be positive");
}

std::string sage_param_name(std::size_t relation, std::size_t layer) {
  return "sage/" + std::to_string(relation) + "/" + std::to_string(layer);
}

SageParams::SageParams(std::size_t relations, std::size_t feature_dim, const EncoderConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  weights_.resize(relations);
  for (std::size_t r = 0; r < relations; ++r) {
    std::size_t in = feature_dim;
    for (std::size_t l = 0; l < cfg.depth(); ++l) {
      const std::size_t out = cfg.hidden_dims[l];
      weights_[r].emplace_back(sage_param_name(r, l), glorot_uniform(out, 2 * in, rng), true);
      in = out;
    }
  }
}

std::vector<Parameter*> SageParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& rel : weights_) {
    for (auto& w : rel) out.push_back(&w);
  }
  return out;
}

void SageParams::set_trainable(bool trainable) {
  for (auto* p : parameters()) p->trainable = trainable;
}

void SageParams::check(std::size_t feature_dim, const EncoderConfig& cfg) const {
  for (std::size_t r = 0; r < weights_.size(); ++r) {
    if (weights_[r].size() != cfg.depth()) {
      throw Error("SageParams: relation " + std::to_string(r) + " has " +
                  std::to_string(weights_[r].size()) + " layers, config says " +
                  std::to_string(cfg.depth()));
    }
    std::size_t in = feature_dim;
    for (std::size_t l = 0; l < cfg.depth(); ++l) {
      require_shape(weights_[r][l].value, cfg.hidden_dims[l], 2 * in, sage_param_name(r, l));
      in = cfg.hidden_dims[l];
    }
  }
}

bool SageParams::operator==(const SageParams& other) const {
  if (weights_.size() != other.weights_.size()) return false;
  for (std::size_t r = 0; r < weights_.size(); ++r) {
    if (weights_[r].size() != other.weights_[r].size()) return false;
    for (std::size_t l = 0; l < weights_[r].size(); ++l) {
      if (!(weights_[r][l].value == other.weights_[r][l].value)) return false;
    }
  }
  return true;
}

Matrix mean_aggregate(const SubgraphView& view, const Matrix& states) {
  if (states.rows() != view.node_count()) {
    throw Error("mean_aggregate: states have " + std::to_string(states.rows()) +
                " rows, view has " + std::to_string(view.node_count()) + " nodes");
  }
  const std::size_t d = states.cols();
  Matrix out(states.rows(), d);
  for (NodeId v = 0; v < view.node_count(); ++v) {
    const auto nb = view.neighbors(v);
    if (nb.empty()) continue;
    double* row = out.data() + static_cast<std::size_t>(v) * d;
    for (NodeId u : nb) {
      const double* src = states.data() + static_cast<std::size_t>(u) * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += src[c];
    }
    const double count = static_cast<double>(nb.size());
    for (std::size_t c = 0; c < d; ++c) row[c] /= count;
  }
  return out;
}

ad::Var mean_aggregate(const SubgraphView& view, ad::Var states) {
  Matrix out = mean_aggregate(view, states.value());
  const std::size_t id = states.id();
  return states.tape().push(std::move(out), states.requires_grad(),
                            [&view, id](ad::Tape& t, const Matrix& g) {
                              Matrix& gs = t.grad(ad::Var(&t, id));
                              const std::size_t d = g.cols();
                              for (NodeId v = 0; v < view.node_count(); ++v) {
                                const auto nb = view.neighbors(v);
                                if (nb.empty()) continue;
                                const double w = 1.0 / static_cast<double>(nb.size());
                                const double* gv = g.data() + static_cast<std::size_t>(v) * d;
                                for (NodeId u : nb) {
                                  kernels::active().axpy(w, gv, gs.data() + static_cast<std::size_t>(u) * d, d);
                                }
                              }
                            });
}

ad::Var sage_layer(const SubgraphView& view, ad::Var states, ad::Var weight, double elu_alpha) {
  const std::size_t in = states.cols();
  if (weight.cols() != 2 * in) {
    throw Error("sage_layer: weight is " + shape_string(weight.value()) + ", expected (out x " +
                std::to_string(2 * in) + ")");
  }
  ad::Var joined = ad::concat_cols(states, mean_aggregate(view, states));
  return ad::elu(ad::matmul_nt(joined, weight), elu_alpha);
}

Matrix sage_layer(const SubgraphView& view, const Matrix& states, const Matrix& weight,
                  double elu_alpha) {
  ad::Tape tape;
  return sage_layer(view, tape.constant(states), tape.constant(weight), elu_alpha).value();
}

std::vector<ad::Var> encode_all(ad::Tape& tape, const graph::RelationalGraph& g,
                                const std::vector<SubgraphView>& views, SageParams& params,
                                const EncoderConfig& cfg, std::span<const std::size_t> relations) {
  cfg.validate();
  params.check(g.feature_dim(), cfg);
  if (views.size() != g.relation_count() || params.relation_count() != g.relation_count()) {
    throw Error("encode_all: graph has " + std::to_string(g.relation_count()) +
                " relations, views " + std::to_string(views.size()) + ", params " +
                std::to_string(params.relation_count()));
  }
  std::vector<std::size_t> order(relations.begin(), relations.end());
  if (order.empty()) {
    for (std::size_t r = 0; r < g.relation_count(); ++r) order.push_back(r);
  }
  ad::Var x = tape.constant(g.features());
  std::vector<ad::Var> out;
  for (std::size_t r : order) {
    if (r >= g.relation_count()) throw Error("encode_all: relation index out of range");
    ad::Var h = x;
    for (std::size_t l = 0; l < cfg.depth(); ++l) {
      h = sage_layer(views[r], h, tape.parameter(params.weight(r, l)), cfg.elu_alpha);
    }
    out.push_back(h);
  }
  return out;
}

RelationEmbeddings encode_all(const graph::RelationalGraph& g,
                              const std::vector<SubgraphView>& views, const SageParams& params,
                              const EncoderConfig& cfg) {
  // The tape only reads parameters it cannot track, so a frozen copy keeps
  // this overload const without duplicating the forward code.
  SageParams frozen = params;
  frozen.set_trainable(false);
  ad::Tape tape;
  RelationEmbeddings out;
  for (ad::Var h : encode_all(tape, g, views, frozen, cfg)) out.slices.push_back(h.value());
  return out;
}

}  // namespace lgspf::encoder
