// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-relation GraphSAGE encoders with full-batch mean aggregation.
//
// Each layer computes ELU(W [h_v || mean_{u in N(v)} h_u]) with no bias. The
// encoders of different relations share nothing.

#include <span>
#include <vector>

#include "lgspf/autodiff.hpp"
#include "lgspf/relgraph.hpp"
#include "lgspf/rng.hpp"

namespace lgspf::encoder {

struct EncoderConfig {
  // Output width of each layer; the last one must equal the LM embedding width.
  std::vector<std::size_t> hidden_dims{64, 64};
  double elu_alpha = 1.0;

  std::size_t depth() const { return hidden_dims.size(); }
  std::size_t output_dim() const { return hidden_dims.empty() ? 0 : hidden_dims.back(); }
  void validate() const;
};

class SageParams {
 public:
  SageParams() = default;
  // Glorot-uniform weights, relation by relation, layer by layer.
  SageParams(std::size_t relations, std::size_t feature_dim, const EncoderConfig& cfg, Rng& rng);

  std::size_t relation_count() const { return weights_.size(); }
  std::size_t depth() const { return weights_.empty() ? 0 : weights_[0].size(); }
  Parameter& weight(std::size_t relation, std::size_t layer) { return weights_.at(relation).at(layer); }
  const Parameter& weight(std::size_t relation, std::size_t layer) const {
    return weights_.at(relation).at(layer);
  }
  std::vector<Parameter*> parameters();
  void set_trainable(bool trainable);
  // Checks shapes against a graph feature width and config.
  void check(std::size_t feature_dim, const EncoderConfig& cfg) const;

  bool operator==(const SageParams& other) const;

 private:
  std::vector<std::vector<Parameter>> weights_;  // [relation][layer], out x 2*in
};

std::string sage_param_name(std::size_t relation, std::size_t layer);

// Row v = mean of neighbor rows, summed in ascending neighbor order; rows of
// isolated nodes are zero.
Matrix mean_aggregate(const graph::SubgraphView& view, const Matrix& states);
ad::Var mean_aggregate(const graph::SubgraphView& view, ad::Var states);

Matrix sage_layer(const graph::SubgraphView& view, const Matrix& states, const Matrix& weight,
                  double elu_alpha = 1.0);
ad::Var sage_layer(const graph::SubgraphView& view, ad::Var states, ad::Var weight,
                   double elu_alpha = 1.0);

// n x m x d_emb, stored as one n x d_emb slice per relation.
struct RelationEmbeddings {
  std::vector<Matrix> slices;

  std::size_t relation_count() const { return slices.size(); }
  std::size_t node_count() const { return slices.empty() ? 0 : slices[0].rows(); }
  std::size_t dim() const { return slices.empty() ? 0 : slices[0].cols(); }
  std::span<const double> at(graph::NodeId v, std::size_t relation) const {
    return slices.at(relation).row(v);
  }
};

RelationEmbeddings encode_all(const graph::RelationalGraph& g,
                              const std::vector<graph::SubgraphView>& views,
                              const SageParams& params, const EncoderConfig& cfg);

// Differentiable form: one n x d_emb Var per requested relation (all when
// `relations` is empty), in the requested order.
std::vector<ad::Var> encode_all(ad::Tape& tape, const graph::RelationalGraph& g,
                                const std::vector<graph::SubgraphView>& views,
                                SageParams& params, const EncoderConfig& cfg,
                                std::span<const std::size_t> relations = {});

}  // namespace lgspf::encoder
