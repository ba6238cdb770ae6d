// SPDX-License-Identifier: Apache-2.0
#include "lgspf/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgspf/prompt.hpp"

namespace lgspf::objective {

using nlohmann::json;

TargetSequences TargetSequences::from_vocabulary(const lm::Vocabulary& vocab) {
  TargetSequences t{vocab.encode(prompt::kFraudWord), vocab.encode(prompt::kNormalWord)};
  if (t.fraud.empty() || t.normal.empty()) throw Error("TargetSequences: empty answer tokenization");
  if (t.fraud == t.normal) throw Error("TargetSequences: answers tokenize identically");
  return t;
}

const std::vector<TokenId>& TargetSequences::for_label(Label y) const {
  switch (y) {
    case Label::kFraud:
      return fraud;
    case Label::kNormal:
      return normal;
    default:
      throw Error("no answer sequence for an unlabeled node");
  }
}

namespace {

void fill_labels(std::size_t prompt_len, std::span<const TokenId> answer,
                 std::vector<TokenId>& labels, std::vector<std::uint8_t>& mask) {
  if (answer.empty()) throw Error("teacher_forced: empty answer");
  if (prompt_len == 0) throw Error("teacher_forced: empty prompt");
  const std::size_t total = prompt_len + answer.size() - 1;
  labels.assign(total, 0);
  mask.assign(total, 0);
  for (std::size_t j = 0; j < answer.size(); ++j) {
    labels[prompt_len - 1 + j] = answer[j];
    mask[prompt_len - 1 + j] = 1;
  }
}

}  // namespace

SupervisedSequence teacher_forced(const lm::DecoderModel& model, const Matrix& prompt,
                                  std::span<const TokenId> answer) {
  SupervisedSequence s;
  fill_labels(prompt.rows(), answer, s.labels, s.loss_mask);
  const Matrix prefix = model.embed(answer.first(answer.size() - 1));
  s.inputs = Matrix(prompt.rows() + prefix.rows(), prompt.cols());
  std::copy(prompt.values().begin(), prompt.values().end(), s.inputs.values().begin());
  std::copy(prefix.values().begin(), prefix.values().end(),
            s.inputs.values().begin() + static_cast<std::ptrdiff_t>(prompt.size()));
  return s;
}

TapeSequence teacher_forced(ad::Tape& tape, lm::DecoderModel& model, ad::Var prompt,
                            std::span<const TokenId> answer) {
  TapeSequence s;
  fill_labels(prompt.value().rows(), answer, s.labels, s.loss_mask);
  if (answer.size() == 1) {
    s.inputs = prompt;
  } else {
    s.inputs = ad::vstack({prompt, model.embed(tape, answer.first(answer.size() - 1))});
  }
  return s;
}

namespace {

ad::Var masked_logprob_impl(ad::Tape& tape, lm::DecoderModel& model, const ad::Var* prefix,
                            const std::vector<TapeSequence>& batch, bool use_adapters) {
  if (batch.empty()) throw Error("masked_logprob: empty batch");
  const std::size_t prefix_rows = prefix != nullptr ? prefix->value().rows() : 0;
  std::vector<ad::Var> parts;
  if (prefix_rows > 0) parts.push_back(*prefix);
  ad::SeqLayout layout = ad::SeqLayout::shared(prefix_rows);
  std::vector<std::size_t> rows;
  std::vector<std::size_t> labels;
  for (const auto& s : batch) {
    const std::size_t len = s.inputs.value().rows();
    if (s.labels.size() != len || s.loss_mask.size() != len) {
      throw Error("masked_logprob: labels/mask length differs from sequence length " +
                  std::to_string(len));
    }
    const std::size_t start = layout.total_rows();
    for (std::size_t p = 0; p < len; ++p) {
      if (s.loss_mask[p]) {
        rows.push_back(start + p);
        labels.push_back(s.labels[p]);
      }
    }
    parts.push_back(s.inputs);
    layout.append(len);
  }
  if (rows.empty()) throw Error("masked_logprob: no supervised positions");
  ad::Var stacked = parts.size() == 1 ? parts[0] : ad::vstack(parts);
  ad::Var h = model.hidden(tape, stacked, layout, use_adapters);
  ad::Var logits = model.head(tape, ad::gather_rows(h, std::move(rows)));
  return ad::log_softmax_pick(logits, std::move(labels));
}

}  // namespace

ad::Var masked_logprob(ad::Tape& tape, lm::DecoderModel& model,
                       const std::vector<TapeSequence>& batch, bool use_adapters) {
  return masked_logprob_impl(tape, model, nullptr, batch, use_adapters);
}

ad::Var masked_logprob(ad::Tape& tape, lm::DecoderModel& model, ad::Var prefix,
                       const std::vector<TapeSequence>& batch, bool use_adapters) {
  return masked_logprob_impl(tape, model, &prefix, batch, use_adapters);
}

double masked_logprob(lm::DecoderModel& model, const SupervisedSequence& seq, bool use_adapters) {
  ad::Tape tape(false);
  const TapeSequence ts{tape.view(seq.inputs), seq.labels, seq.loss_mask};
  return masked_logprob(tape, model, {ts}, use_adapters).value()(0, 0);
}

double sequence_logprob(lm::DecoderModel& model, const Matrix& prompt,
                        std::span<const TokenId> answer, bool use_adapters) {
  return masked_logprob(model, teacher_forced(model, prompt, answer), use_adapters);
}

double training_loss(lm::DecoderModel& model, const Matrix& prompt, const TargetSequences& targets,
                     Label gold, bool use_adapters) {
  return -sequence_logprob(model, prompt, targets.for_label(gold), use_adapters);
}

std::vector<AnswerScores> score_answers(lm::DecoderModel& model, const std::vector<Matrix>& prompts,
                                        const TargetSequences& targets, bool use_adapters) {
  return score_answers(model, Matrix(0, model.dim()), prompts, targets, use_adapters);
}

std::vector<AnswerScores> score_answers(lm::DecoderModel& model, const Matrix& prefix,
                                        const std::vector<Matrix>& prompts,
                                        const TargetSequences& targets, bool use_adapters) {
  std::vector<AnswerScores> out(prompts.size());
  if (prompts.empty()) return out;
  if (prefix.cols() != model.dim()) {
    throw Error("score_answers: prefix width " + std::to_string(prefix.cols()) + " != d_model " +
                std::to_string(model.dim()));
  }
  ad::Tape tape(false);
  const bool shared = targets.fraud.size() == 1 && targets.normal.size() == 1;

  // Each read is (row in stacked logits input, answer token, prompt index, is_fraud).
  struct Read {
    std::size_t row;
    TokenId token;
    std::size_t prompt;
    bool fraud;
  };
  std::vector<Read> reads;
  std::vector<ad::Var> parts;
  if (prefix.rows() > 0) parts.push_back(tape.view(prefix));
  ad::SeqLayout layout = ad::SeqLayout::shared(prefix.rows());
  auto add_sequence = [&](ad::Var inputs, std::size_t i, std::size_t len, bool fraud,
                          std::span<const TokenId> answer) {
    const std::size_t start = layout.total_rows();
    for (std::size_t j = 0; j < answer.size(); ++j) {
      reads.push_back({start + len - 1 + j, answer[j], i, fraud});
    }
    parts.push_back(inputs);
    layout.append(inputs.value().rows());
  };
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    ad::Var p = tape.view(prompts[i]);
    const std::size_t len = prompts[i].rows();
    if (shared) {
      const std::size_t start = layout.total_rows();
      reads.push_back({start + len - 1, targets.fraud[0], i, true});
      reads.push_back({start + len - 1, targets.normal[0], i, false});
      parts.push_back(p);
      layout.append(len);
    } else {
      add_sequence(teacher_forced(tape, model, p, targets.fraud).inputs, i, len, true, targets.fraud);
      add_sequence(teacher_forced(tape, model, p, targets.normal).inputs, i, len, false,
                   targets.normal);
    }
  }
  ad::Var stacked = parts.size() == 1 ? parts[0] : ad::vstack(parts);
  ad::Var h = model.hidden(tape, stacked, layout, use_adapters);
  std::vector<std::size_t> rows;
  for (const auto& r : reads) {
    if (rows.empty() || rows.back() != r.row) rows.push_back(r.row);
  }
  const Matrix lsm = ad::log_softmax_rows(model.head(tape, ad::gather_rows(h, rows)).value());
  std::size_t k = 0;
  for (const auto& r : reads) {
    while (rows[k] != r.row) ++k;
    (r.fraud ? out[r.prompt].fraud : out[r.prompt].normal) += lsm(k, r.token);
  }
  return out;
}

Label predict(lm::DecoderModel& model, const Matrix& prompt, const TargetSequences& targets,
              bool use_adapters) {
  return score_answers(model, {prompt}, targets, use_adapters)[0].label();
}

double anomaly_score(lm::DecoderModel& model, const Matrix& prompt, const TargetSequences& targets,
                     bool use_adapters) {
  return score_answers(model, {prompt}, targets, use_adapters)[0].margin();
}

double roc_auc(std::span<const double> scores, std::span<const Label> gold) {
  if (scores.size() != gold.size()) throw Error("roc_auc: score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      const Label y = gold[order[t]];
      if (y == Label::kFraud) {
        pos_rank_sum += mid_rank;
        ++pos;
      } else if (y == Label::kNormal) {
        ++neg;
      } else {
        throw Error("roc_auc: unlabeled node in evaluation set");
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error("roc_auc: AUC is undefined without both classes");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

EvalReport compute_metrics(std::span<const double> scores, std::span<const Label> predictions,
                           std::span<const Label> gold) {
  if (gold.empty()) throw Error("compute_metrics: empty evaluation set");
  if (scores.size() != gold.size() || predictions.size() != gold.size()) {
    throw Error("compute_metrics: scores, predictions and labels differ in length");
  }
  EvalReport r;
  r.n_eval = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!graph::is_labeled(gold[i])) throw Error("compute_metrics: unlabeled node in evaluation set");
    const bool pred_fraud = predictions[i] == Label::kFraud;
    if (gold[i] == Label::kFraud) {
      ++(pred_fraud ? r.tp : r.fn);
    } else {
      ++(pred_fraud ? r.fp : r.tn);
    }
  }
  const std::size_t pos = r.tp + r.fn, neg = r.tn + r.fp;
  if (pos > 0) r.recall = static_cast<double>(r.tp) / static_cast<double>(pos);
  if (pos > 0 && neg > 0) {
    r.auc = roc_auc(scores, gold);
    const double tnr = static_cast<double>(r.tn) / static_cast<double>(neg);
    r.g_mean = std::sqrt(*r.recall * tnr);
  }
  return r;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json EvalReport::to_json() const {
  return {{"auc", opt(auc)}, {"recall", opt(recall)}, {"g_mean", opt(g_mean)},
          {"tp", tp},        {"fp", fp},              {"tn", tn},
          {"fn", fn},        {"n_eval", n_eval}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.auc = opt_from(j, "auc");
  r.recall = opt_from(j, "recall");
  r.g_mean = opt_from(j, "g_mean");
  r.tp = j.at("tp").get<std::size_t>();
  r.fp = j.at("fp").get<std::size_t>();
  r.tn = j.at("tn").get<std::size_t>();
  r.fn = j.at("fn").get<std::size_t>();
  r.n_eval = j.at("n_eval").get<std::size_t>();
  return r;
}

}  // namespace lgspf::objective
