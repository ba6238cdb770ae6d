// SPDX-License-Identifier: Apache-2.0
#pragma once

// Joint GNN + LM training, ablation variants, evaluation and experiment runs.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lgspf/backbone.hpp"
#include "lgspf/encoder.hpp"
#include "lgspf/objective.hpp"
#include "lgspf/prompt.hpp"
#include "lgspf/relgraph.hpp"

namespace lgspf::harness {

enum class Mode { kFull, kWoLlm, kWoSemantics, kWoJoint, kFlattened, kSingleView };

std::string mode_name(Mode m);
Mode parse_mode(std::string_view name);
// Modes that run the language model.
bool uses_lm(Mode m);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Mode mode = Mode::kFull;
  std::size_t view = 0;  // relation index for kSingleView
  double learning_rate = 3e-4;
  std::size_t epochs = 30;
  std::size_t patience = 5;  // epochs without a val AUC gain before stopping; 0 never stops
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  encoder::EncoderConfig encoder;
  lm::DecoderConfig decoder;
  AdamConfig adam;
  bool inject_scale_norm = false;
  int flatten_digits = 2;
  std::size_t mlp_hidden = 64;  // kWoLlm classifier width

  // Throws when the config cannot run on a graph with this many relations.
  void validate(std::size_t relation_count) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Templates {
  prompt::PromptTemplate soft;
  std::optional<prompt::FlatTemplate> flat;  // required by kFlattened
};

// Graph plus its prepared per-relation views.
struct Dataset {
  graph::RelationalGraph graph;
  std::vector<graph::SubgraphView> views;

  explicit Dataset(graph::RelationalGraph g);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct EvalResult {
  objective::EvalReport report;
  std::vector<graph::NodeId> nodes;
  std::vector<graph::Label> labels;
  std::vector<double> scores;
  std::vector<graph::Label> predictions;
};

// Everything a trained model needs: parameters, vocabulary, templates and
// training bookkeeping.
class Pipeline {
 public:
  Pipeline(const TrainConfig& cfg, std::size_t feature_dim, std::size_t relation_count,
           Templates templates);

  const TrainConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t relation_count() const { return relation_count_; }
  const lm::Vocabulary& vocabulary() const { return vocab_; }
  const Templates& templates() const { return templates_; }
  const prompt::AssembledPrompt& prompt() const { return assembled_; }
  encoder::SageParams& sage() { return sage_; }
  const encoder::SageParams& sage() const { return sage_; }
  lm::DecoderModel& lm() { return lm_; }
  Rng& rng() { return rng_; }

  // Parameters in a fixed order; names are checkpoint keys.
  std::vector<Parameter*> parameters();
  // Parameters Adam updates in the active mode.
  std::vector<Parameter*> trainable_parameters();
  Parameter* find(const std::string& name);

  // Mean answer negative log-likelihood (or cross-entropy for kWoLlm) over
  // the batch; differentiable with respect to the trainable set.
  ad::Var batch_loss(ad::Tape& tape, const Dataset& data, const std::vector<graph::NodeId>& batch);
  double batch_loss(const Dataset& data, const std::vector<graph::NodeId>& batch);

  // Anomaly score and decision for each node, then metrics.
  EvalResult evaluate(const Dataset& data, const std::vector<graph::NodeId>& nodes);

  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  graph::SplitMasks splits;

 private:
  Matrix prompt_embedding(const std::vector<lm::TokenId>& tokens) const;
  std::vector<lm::TokenId> flattened_tokens(const Dataset& data, graph::NodeId v) const;
  double inject_norm() const;

  TrainConfig cfg_;
  std::size_t feature_dim_ = 0;
  std::size_t relation_count_ = 0;
  Templates templates_;
  lm::Vocabulary vocab_;
  prompt::AssembledPrompt assembled_;
  objective::TargetSequences targets_;
  Rng rng_;
  encoder::SageParams sage_;
  lm::DecoderModel lm_;
  Parameter mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  std::vector<std::size_t> relations_;  // relations the encoder runs, in slot order
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, const AdamConfig& cfg);
  // Applies one update from the accumulated gradients, then clears them.
  void step();

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double lr_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains from the config's seed and returns the state with the best
// validation AUC (the initialization counts as epoch 0).
Pipeline train(const Dataset& data, const graph::SplitMasks& splits, const TrainConfig& cfg,
               const Templates& templates, const EpochCallback& on_epoch = {});

EvalResult evaluate(Pipeline& p, const Dataset& data, const std::vector<graph::NodeId>& mask);

// Trains and tests each mode with identical splits and seed.
std::map<std::string, EvalResult> run_ablation(const Dataset& data, const graph::SplitMasks& splits,
                                               const TrainConfig& base, const Templates& templates,
                                               const std::vector<Mode>& modes);
EvalResult run_single_view(const Dataset& data, const graph::SplitMasks& splits,
                           const TrainConfig& base, const Templates& templates, std::size_t view);

// node_id,label,score,prediction
void write_scores_csv(const EvalResult& r, const std::filesystem::path& path);

// Checkpoint directory: index.json plus one binary file per named tensor.
void save_checkpoint(Pipeline& p, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());
Pipeline load_checkpoint(const std::filesystem::path& dir, nlohmann::json* extra = nullptr);

// Single-tensor binary format: "LGT1", u64 rows, u64 cols, row-major doubles.
void write_tensor(const Matrix& m, const std::filesystem::path& path);
Matrix read_tensor(const std::filesystem::path& path);

}  // namespace lgspf::harness
