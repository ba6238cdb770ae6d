// SPDX-License-Identifier: Apache-2.0
#pragma once

// Answer likelihoods under teacher forcing, the answer-only training loss,
// the likelihood-margin anomaly score and evaluation metrics.

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "lgspf/autodiff.hpp"
#include "lgspf/backbone.hpp"
#include "lgspf/relgraph.hpp"

namespace lgspf::objective {

using graph::Label;
using lm::TokenId;

struct TargetSequences {
  std::vector<TokenId> fraud;
  std::vector<TokenId> normal;

  static TargetSequences from_vocabulary(const lm::Vocabulary& vocab);
  // Throws for unlabeled.
  const std::vector<TokenId>& for_label(Label y) const;
};

// Prompt rows followed by the embedded answer prefix; labels[p] is the token
// expected after position p and only positions with loss_mask set are scored.
struct SupervisedSequence {
  Matrix inputs;
  std::vector<TokenId> labels;
  std::vector<std::uint8_t> loss_mask;
};

struct TapeSequence {
  ad::Var inputs;
  std::vector<TokenId> labels;
  std::vector<std::uint8_t> loss_mask;
};

SupervisedSequence teacher_forced(const lm::DecoderModel& model, const Matrix& prompt,
                                  std::span<const TokenId> answer);
TapeSequence teacher_forced(ad::Tape& tape, lm::DecoderModel& model, ad::Var prompt,
                            std::span<const TokenId> answer);

// Sum of log p(labels[p]) over masked positions of all sequences, run as one
// stacked forward pass. Returns 1 x 1.
ad::Var masked_logprob(ad::Tape& tape, lm::DecoderModel& model,
                       const std::vector<TapeSequence>& batch, bool use_adapters = true);
double masked_logprob(lm::DecoderModel& model, const SupervisedSequence& seq,
                      bool use_adapters = true);
// Same, where every sequence continues one shared prefix (rows of the prefix
// carry no labels). Values equal the unshared computation.
ad::Var masked_logprob(ad::Tape& tape, lm::DecoderModel& model, ad::Var prefix,
                       const std::vector<TapeSequence>& batch, bool use_adapters = true);

double sequence_logprob(lm::DecoderModel& model, const Matrix& prompt,
                        std::span<const TokenId> answer, bool use_adapters = true);
// Negative gold-answer log-likelihood; prompt positions carry no loss.
double training_loss(lm::DecoderModel& model, const Matrix& prompt, const TargetSequences& targets,
                     Label gold, bool use_adapters = true);

struct AnswerScores {
  double fraud = 0.0;   // log P(fraud answer | prompt)
  double normal = 0.0;  // log P(normal answer | prompt)

  double margin() const { return fraud - normal; }
  // Ties go to normal.
  Label label() const { return fraud > normal ? Label::kFraud : Label::kNormal; }
};

// Both answers for each prompt; prompts whose answers are single tokens share
// one forward pass.
std::vector<AnswerScores> score_answers(lm::DecoderModel& model, const std::vector<Matrix>& prompts,
                                        const TargetSequences& targets, bool use_adapters = true);
// Prompts given as continuations of a shared prefix (which may be empty).
std::vector<AnswerScores> score_answers(lm::DecoderModel& model, const Matrix& prefix,
                                        const std::vector<Matrix>& prompts,
                                        const TargetSequences& targets, bool use_adapters = true);

Label predict(lm::DecoderModel& model, const Matrix& prompt, const TargetSequences& targets,
              bool use_adapters = true);
double anomaly_score(lm::DecoderModel& model, const Matrix& prompt, const TargetSequences& targets,
                     bool use_adapters = true);

// Probability that a random fraud node outscores a random normal node, ties
// counted one half. Throws when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const Label> gold);

struct EvalReport {
  std::optional<double> auc;
  std::optional<double> recall;
  std::optional<double> g_mean;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t n_eval = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

// Fraud is the positive class. Metrics that are undefined for the input
// (AUC or G-Mean with one class, recall without fraud) are left empty.
EvalReport compute_metrics(std::span<const double> scores, std::span<const Label> predictions,
                           std::span<const Label> gold);

}  // namespace lgspf::objective
