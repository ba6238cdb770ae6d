// SPDX-License-Identifier: Apache-2.0
#include "lgspf/harness.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace lgspf::harness {

using graph::Label;
using graph::NodeId;
using nlohmann::json;

namespace {

constexpr std::size_t kEvalChunk = 16;

const std::vector<std::pair<Mode, const char*>> kModeNames{
    {Mode::kFull, "full"},         {Mode::kWoLlm, "wo_llm"},         {Mode::kWoSemantics, "wo_semantics"},
    {Mode::kWoJoint, "wo_joint"}, {Mode::kFlattened, "flattened"}, {Mode::kSingleView, "single_view"}};

void check_keys(const json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw Error(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw Error(std::string(what) + ": unknown key '" + key + "'");
  }
}

}  // namespace

std::string mode_name(Mode m) {
  for (const auto& [mode, name] : kModeNames) {
    if (mode == m) return name;
  }
  throw Error("unknown mode");
}

Mode parse_mode(std::string_view name) {
  for (const auto& [mode, n] : kModeNames) {
    if (name == n) return mode;
  }
  throw Error("unknown mode '" + std::string(name) +
              "' (expected full, wo_llm, wo_semantics, wo_joint, flattened or single_view)");
}

bool uses_lm(Mode m) { return m != Mode::kWoLlm; }

void TrainConfig::validate(std::size_t relation_count) const {
  if (!(learning_rate > 0.0)) throw Error("TrainConfig: learning_rate must be positive");
  if (batch_size == 0) throw Error("TrainConfig: batch_size must be positive");
  if (mode == Mode::kSingleView && view >= relation_count) {
    throw Error("TrainConfig: single_view index " + std::to_string(view) + " but the graph has " +
                std::to_string(relation_count) + " relations");
  }
  if (flatten_digits < 0 || flatten_digits > 17) throw Error("TrainConfig: flatten_digits must be in [0, 17]");
  if (mlp_hidden == 0) throw Error("TrainConfig: mlp_hidden must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw Error("TrainConfig: invalid Adam hyperparameters");
  }
  encoder.validate();
  decoder.validate();
  if (encoder.output_dim() != decoder.d_model) {
    throw Error("TrainConfig: encoder output width " + std::to_string(encoder.output_dim()) +
                " must equal the LM embedding width " + std::to_string(decoder.d_model));
  }
}

json TrainConfig::to_json() const {
  return {{"mode", mode_name(mode)},
          {"view", view},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"patience", patience},
          {"batch_size", batch_size},
          {"seed", seed},
          {"encoder", {{"hidden_dims", encoder.hidden_dims}, {"elu_alpha", encoder.elu_alpha}}},
          {"decoder", decoder.to_json()},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"inject_scale_norm", inject_scale_norm},
          {"flatten_digits", flatten_digits},
          {"mlp_hidden", mlp_hidden}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  check_keys(j,
             {"mode", "view", "learning_rate", "epochs", "patience", "batch_size", "seed", "encoder",
              "decoder", "adam", "inject_scale_norm", "flatten_digits", "mlp_hidden"},
             "train config");
  TrainConfig c;
  try {
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    c.view = j.value("view", c.view);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      check_keys(e, {"hidden_dims", "elu_alpha"}, "encoder config");
      c.encoder.hidden_dims = e.value("hidden_dims", c.encoder.hidden_dims);
      c.encoder.elu_alpha = e.value("elu_alpha", c.encoder.elu_alpha);
    }
    if (j.contains("decoder")) {
      check_keys(j.at("decoder"),
                 {"layers", "heads", "d_model", "d_ff", "max_seq_len", "lora_rank", "lora_alpha",
                  "rope_base", "norm_eps"},
                 "decoder config");
      c.decoder = lm::DecoderConfig::from_json(j.at("decoder"));
    }
    if (j.contains("adam")) {
      const json& a = j.at("adam");
      check_keys(a, {"beta1", "beta2", "eps"}, "adam config");
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.eps = a.value("eps", c.adam.eps);
    }
    c.inject_scale_norm = j.value("inject_scale_norm", c.inject_scale_norm);
    c.flatten_digits = j.value("flatten_digits", c.flatten_digits);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  } catch (const json::exception& ex) {
    throw Error(std::string("train config: ") + ex.what());
  }
  return c;
}

Dataset::Dataset(graph::RelationalGraph g) : graph(std::move(g)), views(graph::prepare_views(graph)) {}

Pipeline::Pipeline(const TrainConfig& cfg, std::size_t feature_dim, std::size_t relation_count,
                   Templates templates)
    : cfg_(cfg),
      feature_dim_(feature_dim),
      relation_count_(relation_count),
      templates_(std::move(templates)),
      rng_(cfg.seed) {
  cfg_.validate(relation_count);
  templates_.soft.validate();
  if (templates_.soft.relations.size() != relation_count) {
    throw Error("prompt template has " + std::to_string(templates_.soft.relations.size()) +
                " relation slots but the graph has " + std::to_string(relation_count) + " relations");
  }
  if (cfg_.mode == Mode::kFlattened) {
    if (!templates_.flat) throw Error("flattened mode needs a flat template");
    if (templates_.flat->relation_descriptions.size() != relation_count) {
      throw Error("flat template relation count differs from the graph's");
    }
  }
  vocab_ = prompt::build_vocabulary(templates_.soft, templates_.flat ? &*templates_.flat : nullptr);
  targets_ = objective::TargetSequences::from_vocabulary(vocab_);
  const prompt::PromptTemplate active =
      cfg_.mode == Mode::kSingleView ? prompt::single_view(templates_.soft, cfg_.view) : templates_.soft;
  assembled_ = prompt::assemble_template(active, vocab_, cfg_.mode != Mode::kWoSemantics);
  if (cfg_.mode == Mode::kWoLlm) {
    for (std::size_t r = 0; r < relation_count; ++r) relations_.push_back(r);
  } else if (cfg_.mode != Mode::kFlattened) {
    relations_ = assembled_.relations;
    const std::size_t answer = std::max(targets_.fraud.size(), targets_.normal.size());
    if (assembled_.length() + answer - 1 > cfg_.decoder.max_seq_len) {
      throw Error("assembled prompt of " + std::to_string(assembled_.length()) +
                  " tokens plus the answer exceeds max_seq_len " +
                  std::to_string(cfg_.decoder.max_seq_len));
    }
  }

  // Draw order is fixed so every mode starts from the same encoder and LM.
  sage_ = encoder::SageParams(relation_count, feature_dim, cfg_.encoder, rng_);
  lm_ = lm::DecoderModel(cfg_.decoder, vocab_.size(), rng_);
  const std::size_t concat = relation_count * cfg_.encoder.output_dim();
  mlp_w1_ = Parameter("mlp/w1", glorot_uniform(cfg_.mlp_hidden, concat, rng_));
  mlp_b1_ = Parameter("mlp/b1", Matrix(1, cfg_.mlp_hidden));
  mlp_w2_ = Parameter("mlp/w2", glorot_uniform(2, cfg_.mlp_hidden, rng_));
  mlp_b2_ = Parameter("mlp/b2", Matrix(1, 2));

  for (Parameter* p : lm_.base_parameters()) p->trainable = false;
  for (Parameter* p : lm::lora_trainable(lm_.adapters())) p->trainable = uses_lm(cfg_.mode);
  const bool gnn = cfg_.mode == Mode::kFull || cfg_.mode == Mode::kWoSemantics ||
                   cfg_.mode == Mode::kWoLlm || cfg_.mode == Mode::kSingleView;
  for (std::size_t r = 0; r < relation_count; ++r) {
    const bool on = gnn && (cfg_.mode != Mode::kSingleView || r == cfg_.view);
    for (std::size_t l = 0; l < sage_.depth(); ++l) sage_.weight(r, l).trainable = on;
  }
  for (Parameter* p : {&mlp_w1_, &mlp_b1_, &mlp_w2_, &mlp_b2_}) p->trainable = cfg_.mode == Mode::kWoLlm;
}

std::vector<Parameter*> Pipeline::parameters() {
  std::vector<Parameter*> out = sage_.parameters();
  for (Parameter* p : lm_.parameters()) out.push_back(p);
  if (cfg_.mode == Mode::kWoLlm) {
    for (Parameter* p : {&mlp_w1_, &mlp_b1_, &mlp_w2_, &mlp_b2_}) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> Pipeline::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

Parameter* Pipeline::find(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

Matrix Pipeline::prompt_embedding(const std::vector<lm::TokenId>& tokens) const {
  return lm_.embed(tokens);
}

std::vector<lm::TokenId> Pipeline::flattened_tokens(const Dataset& data, NodeId v) const {
  const std::string text =
      prompt::flatten_features(v, data.graph, data.views, *templates_.flat, cfg_.flatten_digits);
  auto tokens = vocab_.encode(text);
  const std::size_t answer = std::max(targets_.fraud.size(), targets_.normal.size());
  if (tokens.size() + answer - 1 > cfg_.decoder.max_seq_len) {
    throw Error("flattened prompt for node " + std::to_string(v) + " has " +
                std::to_string(tokens.size()) + " tokens, over max_seq_len " +
                std::to_string(cfg_.decoder.max_seq_len));
  }
  return tokens;
}

double Pipeline::inject_norm() const {
  const Matrix& we = lm_.embedding().value;
  double total = 0.0;
  for (std::size_t r = 0; r < we.rows(); ++r) {
    double sq = 0.0;
    for (double v : we.row(r)) sq += v * v;
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(we.rows());
}

namespace {

void check_nodes(const graph::RelationalGraph& g, const std::vector<NodeId>& nodes, bool need_labels) {
  if (nodes.empty()) throw Error("empty node set");
  for (NodeId v : nodes) {
    if (v >= g.node_count()) throw Error("node " + std::to_string(v) + " out of range");
    if (need_labels && !graph::is_labeled(g.label(v))) {
      throw Error("node " + std::to_string(v) + " is unlabeled");
    }
  }
}

// Shared leading tokens, leaving every sequence at least one token of its own.
std::size_t common_prefix(const std::vector<std::vector<lm::TokenId>>& seqs) {
  std::size_t n = seqs.front().size() - 1;
  for (const auto& s : seqs) {
    n = std::min(n, s.size() - 1);
    std::size_t i = 0;
    while (i < n && s[i] == seqs.front()[i]) ++i;
    n = i;
  }
  return n;
}

std::vector<lm::TokenId> token_range(const std::vector<lm::TokenId>& t, std::size_t from,
                                     std::size_t to) {
  return {t.begin() + static_cast<std::ptrdiff_t>(from), t.begin() + static_cast<std::ptrdiff_t>(to)};
}

std::vector<std::size_t> shifted(std::vector<std::size_t> positions, std::size_t by) {
  for (auto& p : positions) p -= by;
  return positions;
}

// Stacks relation rows of node i of the gathered batch, in slot order.
ad::Var node_rows(const std::vector<ad::Var>& gathered, std::size_t i) {
  std::vector<ad::Var> parts;
  for (const ad::Var& g : gathered) parts.push_back(ad::gather_rows(g, {i}));
  return parts.size() == 1 ? parts[0] : ad::vstack(parts);
}

}  // namespace

ad::Var Pipeline::batch_loss(ad::Tape& tape, const Dataset& data, const std::vector<NodeId>& batch) {
  check_nodes(data.graph, batch, true);
  const double inv = -1.0 / static_cast<double>(batch.size());
  if (cfg_.mode == Mode::kFlattened) {
    std::vector<std::vector<lm::TokenId>> tokens;
    for (NodeId v : batch) tokens.push_back(flattened_tokens(data, v));
    const std::size_t shared = common_prefix(tokens);
    std::vector<objective::TapeSequence> seqs;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ad::Var p = tape.constant(prompt_embedding(token_range(tokens[i], shared, tokens[i].size())));
      seqs.push_back(
          objective::teacher_forced(tape, lm_, p, targets_.for_label(data.graph.label(batch[i]))));
    }
    ad::Var prefix = tape.constant(prompt_embedding(token_range(tokens[0], 0, shared)));
    return ad::scale(objective::masked_logprob(tape, lm_, prefix, seqs), inv);
  }

  const auto h = encoder::encode_all(tape, data.graph, data.views, sage_, cfg_.encoder, relations_);
  std::vector<ad::Var> gathered;
  for (const ad::Var& hr : h) gathered.push_back(ad::gather_rows(hr, {batch.begin(), batch.end()}));

  if (cfg_.mode == Mode::kWoLlm) {
    ad::Var x = gathered.size() == 1 ? gathered[0] : ad::concat_cols(gathered);
    ad::Var hidden = ad::elu(ad::add_row(ad::matmul_nt(x, tape.parameter(mlp_w1_)), tape.parameter(mlp_b1_)));
    ad::Var logits = ad::add_row(ad::matmul_nt(hidden, tape.parameter(mlp_w2_)), tape.parameter(mlp_b2_));
    std::vector<std::size_t> y;
    for (NodeId v : batch) {
      if (!graph::is_labeled(data.graph.label(v))) throw Error("unlabeled node in batch");
      y.push_back(data.graph.label(v) == Label::kFraud ? 1 : 0);
    }
    return ad::scale(ad::log_softmax_pick(logits, std::move(y)), inv);
  }

  // Tokens before the first structure slot are identical for every node.
  const std::size_t shared = assembled_.positions.front();
  const auto& tokens = assembled_.tokens;
  ad::Var prefix = tape.constant(prompt_embedding(token_range(tokens, 0, shared)));
  ad::Var temp = tape.constant(prompt_embedding(token_range(tokens, shared, tokens.size())));
  const auto positions = shifted(assembled_.positions, shared);
  const double norm = cfg_.inject_scale_norm ? inject_norm() : 0.0;
  std::vector<objective::TapeSequence> seqs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Var rows = node_rows(gathered, i);
    if (cfg_.inject_scale_norm) rows = ad::rescale_rows(rows, norm);
    ad::Var p = prompt::inject_structure(temp, rows, positions);
    seqs.push_back(
        objective::teacher_forced(tape, lm_, p, targets_.for_label(data.graph.label(batch[i]))));
  }
  return ad::scale(objective::masked_logprob(tape, lm_, prefix, seqs), inv);
}

double Pipeline::batch_loss(const Dataset& data, const std::vector<NodeId>& batch) {
  ad::Tape tape(false);
  return batch_loss(tape, data, batch).value()(0, 0);
}

EvalResult Pipeline::evaluate(const Dataset& data, const std::vector<NodeId>& nodes) {
  check_nodes(data.graph, nodes, true);
  EvalResult out;
  out.nodes = nodes;
  out.scores.reserve(nodes.size());
  out.predictions.reserve(nodes.size());
  auto add_scores = [&](const std::vector<objective::AnswerScores>& s) {
    for (const auto& a : s) {
      out.scores.push_back(a.margin());
      out.predictions.push_back(a.label());
    }
  };

  if (cfg_.mode == Mode::kFlattened) {
    for (std::size_t start = 0; start < nodes.size(); start += kEvalChunk) {
      std::vector<std::vector<lm::TokenId>> tokens;
      for (std::size_t i = start; i < std::min(nodes.size(), start + kEvalChunk); ++i) {
        tokens.push_back(flattened_tokens(data, nodes[i]));
      }
      const std::size_t shared = common_prefix(tokens);
      std::vector<Matrix> prompts;
      for (const auto& t : tokens) prompts.push_back(prompt_embedding(token_range(t, shared, t.size())));
      add_scores(objective::score_answers(lm_, prompt_embedding(token_range(tokens[0], 0, shared)),
                                          prompts, targets_));
    }
  } else {
    ad::Tape tape(false);
    const auto h = encoder::encode_all(tape, data.graph, data.views, sage_, cfg_.encoder, relations_);
    std::vector<ad::Var> gathered;
    for (const ad::Var& hr : h) gathered.push_back(ad::gather_rows(hr, {nodes.begin(), nodes.end()}));
    if (cfg_.mode == Mode::kWoLlm) {
      ad::Var x = gathered.size() == 1 ? gathered[0] : ad::concat_cols(gathered);
      ad::Var hidden = ad::elu(ad::add_row(ad::matmul_nt(x, tape.parameter(mlp_w1_)), tape.parameter(mlp_b1_)));
      const Matrix lsm = ad::log_softmax_rows(
          ad::add_row(ad::matmul_nt(hidden, tape.parameter(mlp_w2_)), tape.parameter(mlp_b2_)).value());
      std::vector<objective::AnswerScores> s;
      for (std::size_t i = 0; i < nodes.size(); ++i) s.push_back({lsm(i, 1), lsm(i, 0)});
      add_scores(s);
    } else {
      const std::size_t shared = assembled_.positions.front();
      const auto& tokens = assembled_.tokens;
      const Matrix prefix = prompt_embedding(token_range(tokens, 0, shared));
      const Matrix temp = prompt_embedding(token_range(tokens, shared, tokens.size()));
      const auto positions = shifted(assembled_.positions, shared);
      ad::Var temp_var = tape.view(temp);
      const double norm = cfg_.inject_scale_norm ? inject_norm() : 0.0;
      for (std::size_t start = 0; start < nodes.size(); start += kEvalChunk) {
        std::vector<Matrix> prompts;
        for (std::size_t i = start; i < std::min(nodes.size(), start + kEvalChunk); ++i) {
          ad::Var rows = node_rows(gathered, i);
          if (cfg_.inject_scale_norm) rows = ad::rescale_rows(rows, norm);
          prompts.push_back(prompt::inject_structure(temp_var, rows, positions).value());
        }
        add_scores(objective::score_answers(lm_, prefix, prompts, targets_));
      }
    }
  }
  for (NodeId v : nodes) out.labels.push_back(data.graph.label(v));
  out.report = objective::compute_metrics(out.scores, out.predictions, out.labels);
  return out;
}

Adam::Adam(std::vector<Parameter*> params, double lr, const AdamConfig& cfg)
    : params_(std::move(params)), lr_(lr), cfg_(cfg) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.grad.same_shape(p.value)) continue;  // no gradient reached it
    auto g = p.grad.values();
    auto w = p.value.values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
    p.zero_grad();
  }
}

Pipeline train(const Dataset& data, const graph::SplitMasks& splits, const TrainConfig& cfg,
               const Templates& templates, const EpochCallback& on_epoch) {
  Pipeline p(cfg, data.graph.feature_dim(), data.graph.relation_count(), templates);
  check_nodes(data.graph, splits.train, true);
  check_nodes(data.graph, splits.val, true);
  p.splits = splits;

  auto val_auc = [&] {
    const auto r = p.evaluate(data, splits.val).report;
    if (!r.auc) throw Error("validation split needs both classes to compute AUC");
    return *r.auc;
  };
  auto snapshot = [&] {
    std::vector<Matrix> s;
    for (Parameter* q : p.parameters()) s.push_back(q->value);
    return s;
  };

  Adam adam(p.trainable_parameters(), cfg.learning_rate, cfg.adam);
  double best = val_auc();
  auto best_state = snapshot();
  p.history.push_back({0, p.batch_loss(data, splits.train), best});
  if (on_epoch) on_epoch(p.history.back());
  p.best_epoch = 0;

  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<NodeId> order = splits.train;
    p.rng().shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<NodeId> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                      order.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(order.size(), start + cfg.batch_size)));
      ad::Tape tape;
      ad::Var loss = p.batch_loss(tape, data, batch);
      total += loss.value()(0, 0) * static_cast<double>(batch.size());
      tape.backward(loss);
      adam.step();
    }
    const double auc = val_auc();
    p.history.push_back({epoch, total / static_cast<double>(order.size()), auc});
    if (on_epoch) on_epoch(p.history.back());
    if (auc > best) {
      best = auc;
      best_state = snapshot();
      p.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  const auto params = p.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(best_state[i]);
  return p;
}

EvalResult evaluate(Pipeline& p, const Dataset& data, const std::vector<NodeId>& mask) {
  if (data.graph.feature_dim() != p.feature_dim() || data.graph.relation_count() != p.relation_count()) {
    throw Error("checkpoint expects " + std::to_string(p.relation_count()) + " relations with " +
                std::to_string(p.feature_dim()) + " features, graph has " +
                std::to_string(data.graph.relation_count()) + " with " +
                std::to_string(data.graph.feature_dim()));
  }
  return p.evaluate(data, mask);
}

std::map<std::string, EvalResult> run_ablation(const Dataset& data, const graph::SplitMasks& splits,
                                               const TrainConfig& base, const Templates& templates,
                                               const std::vector<Mode>& modes) {
  std::map<std::string, EvalResult> out;
  for (Mode m : modes) {
    TrainConfig cfg = base;
    cfg.mode = m;
    Pipeline p = train(data, splits, cfg, templates);
    out.emplace(mode_name(m), evaluate(p, data, splits.test));
  }
  return out;
}

EvalResult run_single_view(const Dataset& data, const graph::SplitMasks& splits,
                           const TrainConfig& base, const Templates& templates, std::size_t view) {
  TrainConfig cfg = base;
  cfg.mode = Mode::kSingleView;
  cfg.view = view;
  Pipeline p = train(data, splits, cfg, templates);
  return evaluate(p, data, splits.test);
}

void write_scores_csv(const EvalResult& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "node_id,label,score,prediction\n";
  out.precision(17);
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    out << r.nodes[i] << ',' << static_cast<int>(r.labels[i]) << ',' << r.scores[i] << ','
        << static_cast<int>(r.predictions[i]) << '\n';
  }
}

}  // namespace lgspf::harness
