// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lgspf/objective.hpp"
#include "lgspf/prompt.hpp"
#include "sage_oracle.hpp"
#include "test_util.hpp"

using namespace lgspf;
using namespace lgspf::objective;
using graph::Label;
using lgspf::testing::random_matrix;

namespace {

lm::DecoderModel small_model(std::size_t vocab, Rng& rng, bool active_adapters = true) {
  lm::DecoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.max_seq_len = 32;
  lm::DecoderModel model(cfg, vocab, rng);
  if (active_adapters) {
    for (auto& a : model.adapters()) a.b.value = random_matrix(8, 4, rng, -0.5, 0.5);
  }
  return model;
}

std::vector<int> as_ints(const std::vector<Label>& y) {
  std::vector<int> out;
  for (Label l : y) out.push_back(static_cast<int>(l));
  return out;
}

}  // namespace

TEST_CASE("answer sequences come from the vocabulary") {
  const auto vocab = prompt::build_vocabulary(
      prompt::read_template(std::filesystem::path(LGSPF_DATA_DIR) / "templates" / "synthetic.json"));
  const auto t = TargetSequences::from_vocabulary(vocab);
  CHECK(vocab.decode(t.fraud) == "fraud");
  CHECK(vocab.decode(t.normal) == "normal");
  CHECK(&t.for_label(Label::kFraud) == &t.fraud);
  CHECK_THROWS_AS(t.for_label(Label::kUnlabeled), Error);
}

TEST_CASE("single-token answer log-likelihood is the log-softmax entry") {
  Rng rng(1);
  auto model = small_model(7, rng);
  const Matrix prompt = random_matrix(6, 8, rng);
  const Matrix lp = ad::log_softmax_rows(model.forward_logits(prompt));
  for (lm::TokenId t = 0; t < 7; ++t) {
    CHECK(sequence_logprob(model, prompt, std::vector<lm::TokenId>{t}) == lp(5, t));
  }
}

TEST_CASE("uniform logits give log(1/V) per answer token") {
  Rng rng(2);
  auto model = small_model(10, rng);
  model.embedding().value = Matrix(10, 8, 0.0);
  const Matrix prompt = random_matrix(4, 8, rng);
  CHECK(sequence_logprob(model, prompt, std::vector<lm::TokenId>{3, 7}) ==
        doctest::Approx(2.0 * std::log(0.1)).epsilon(1e-14));
}

TEST_CASE("completions of a fixed length form a probability distribution") {
  Rng rng(3);
  auto model = small_model(6, rng);
  model.embedding().value = random_matrix(6, 8, rng, -1.5, 1.5);
  const Matrix prompt = random_matrix(5, 8, rng);
  double one = 0.0, two = 0.0;
  for (lm::TokenId a = 0; a < 6; ++a) {
    one += std::exp(sequence_logprob(model, prompt, std::vector<lm::TokenId>{a}));
    for (lm::TokenId b = 0; b < 6; ++b) {
      two += std::exp(sequence_logprob(model, prompt, std::vector<lm::TokenId>{a, b}));
    }
  }
  CHECK(std::abs(one - 1.0) <= 1e-9);
  CHECK(std::abs(two - 1.0) <= 1e-9);
}

TEST_CASE("training loss is the negated gold log-likelihood and ignores prompt labels") {
  Rng rng(4);
  auto model = small_model(9, rng);
  const Matrix prompt = random_matrix(7, 8, rng);
  const TargetSequences targets{{2, 5}, {4}};
  CHECK(training_loss(model, prompt, targets, Label::kFraud) ==
        -sequence_logprob(model, prompt, targets.fraud));
  CHECK(training_loss(model, prompt, targets, Label::kNormal) ==
        -sequence_logprob(model, prompt, targets.normal));
  CHECK_THROWS_AS(training_loss(model, prompt, targets, Label::kUnlabeled), Error);

  auto seq = teacher_forced(model, prompt, targets.fraud);
  REQUIRE(seq.inputs.rows() == 8);
  CHECK(seq.loss_mask == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 1, 1});
  const double base = masked_logprob(model, seq);
  for (int trial = 0; trial < 20; ++trial) {
    auto altered = seq;
    for (std::size_t p = 0; p < altered.labels.size(); ++p) {
      if (!altered.loss_mask[p]) altered.labels[p] = static_cast<lm::TokenId>(rng.below(9));
    }
    CHECK(masked_logprob(model, altered) == base);
  }
  auto flipped = seq;
  flipped.labels[6] = 3;
  CHECK(masked_logprob(model, flipped) != base);
}

TEST_CASE("a model certain of the gold answer has zero loss") {
  Rng rng(5);
  auto model = small_model(5, rng, false);
  const Matrix prompt = random_matrix(3, 8, rng);
  Matrix we(5, 8, 0.0);
  we(2, 0) = 1.0;
  model.embedding().value = we;
  const double direction = model.forward_logits(prompt)(2, 2) > 0.0 ? 1.0 : -1.0;
  we(2, 0) = direction * 1e6;
  model.embedding().value = we;
  const TargetSequences targets{{2}, {1}};
  CHECK(training_loss(model, prompt, targets, Label::kFraud) == 0.0);
}

TEST_CASE("decision rule, margin and tie-break") {
  CHECK(AnswerScores{-1.0, -2.0}.label() == Label::kFraud);
  CHECK(AnswerScores{-2.0, -2.0}.label() == Label::kNormal);
  CHECK(AnswerScores{-2.0, -2.0}.margin() == 0.0);
  CHECK(AnswerScores{-1.0, -3.0}.margin() == 2.0);
}

TEST_CASE("prediction, anomaly score and likelihoods agree") {
  Rng rng(6);
  auto model = small_model(8, rng);
  for (const TargetSequences targets : {TargetSequences{{1}, {6}}, TargetSequences{{1, 3}, {6}}}) {
    const TargetSequences swapped{targets.normal, targets.fraud};
    std::vector<Matrix> prompts;
    for (int i = 0; i < 100; ++i) prompts.push_back(random_matrix(3 + i % 5, 8, rng));
    const auto batched = score_answers(model, prompts, targets);
    std::size_t fraud = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const double s = anomaly_score(model, prompts[i], targets);
      CHECK(s == batched[i].margin());
      CHECK(batched[i].fraud == sequence_logprob(model, prompts[i], targets.fraud));
      CHECK(batched[i].normal == sequence_logprob(model, prompts[i], targets.normal));
      const Label y = predict(model, prompts[i], targets);
      CHECK((y == Label::kFraud) == (s > 0.0));
      CHECK(anomaly_score(model, prompts[i], swapped) == -s);
      fraud += y == Label::kFraud;
    }
    CHECK(fraud > 0);
    CHECK(fraud < 100);
  }
}

TEST_CASE("shared-prefix scoring and loss equal the unshared computation") {
  Rng rng(9);
  auto model = small_model(8, rng);
  const Matrix prefix = random_matrix(4, 8, rng);
  std::vector<Matrix> own, full;
  for (std::size_t n : {1, 3, 2}) {
    own.push_back(random_matrix(n, 8, rng));
    ad::Tape t(false);
    full.push_back(ad::vstack({t.view(prefix), t.view(own.back())}).value());
  }
  for (const TargetSequences targets : {TargetSequences{{1}, {6}}, TargetSequences{{1, 3}, {6}}}) {
    const auto a = score_answers(model, prefix, own, targets);
    const auto b = score_answers(model, full, targets);
    for (std::size_t i = 0; i < own.size(); ++i) {
      CHECK(a[i].fraud == b[i].fraud);
      CHECK(a[i].normal == b[i].normal);
    }
  }
  CHECK(score_answers(model, Matrix(0, 8), full, {{1}, {6}})[2].fraud ==
        score_answers(model, full, {{1}, {6}})[2].fraud);
  CHECK_THROWS_AS(score_answers(model, Matrix(2, 5), own, {{1}, {6}}), Error);

  // Gradients agree up to summation order.
  for (Parameter* p : model.base_parameters()) p->trainable = false;
  const std::vector<lm::TokenId> answer{2, 5};
  auto lora_grads = [&](bool shared) {
    for (Parameter* p : model.parameters()) p->zero_grad();
    ad::Tape tape;
    std::vector<TapeSequence> seqs;
    for (std::size_t i = 0; i < own.size(); ++i) {
      seqs.push_back(teacher_forced(tape, model, tape.view(shared ? own[i] : full[i]), answer));
    }
    ad::Var lp = shared ? masked_logprob(tape, model, tape.view(prefix), seqs) : masked_logprob(tape, model, seqs);
    tape.backward(lp);
    std::vector<Matrix> g;
    for (Parameter* p : lm::lora_trainable(model.adapters())) g.push_back(p->grad);
    return std::make_pair(lp.value()(0, 0), g);
  };
  const auto [lp_shared, g_shared] = lora_grads(true);
  const auto [lp_full, g_full] = lora_grads(false);
  CHECK(lp_shared == lp_full);
  REQUIRE(g_full.size() == 8);
  for (std::size_t i = 0; i < g_full.size(); ++i) {
    REQUIRE(g_full[i].same_shape(g_shared[i]));
    for (std::size_t e = 0; e < g_full[i].size(); ++e) {
      CHECK(lgspf::testing::gradient_rel_error(g_shared[i].values()[e], g_full[i].values()[e], 1e-12) <=
            1e-10);
    }
  }
}

TEST_CASE("loss gradient reaches injected rows") {
  Rng rng(7);
  auto model = small_model(8, rng);
  for (Parameter* p : model.base_parameters()) p->trainable = false;
  Parameter rows("h", random_matrix(2, 8, rng), true);
  ad::Tape tape;
  ad::Var prompt = ad::replace_rows(tape.constant(random_matrix(6, 8, rng)), tape.parameter(rows), {1, 3});
  const std::vector<lm::TokenId> answer{4};
  tape.backward(ad::scale(masked_logprob(tape, model, {teacher_forced(tape, model, prompt, answer)}), -1.0));
  for (std::size_t r = 0; r < 2; ++r) {
    double norm = 0.0;
    for (double v : rows.grad.row(r)) norm += v * v;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("AUC and confusion metrics") {
  const std::vector<double> s{0.9, 0.8, 0.4, 0.3};
  const std::vector<Label> y{Label::kFraud, Label::kFraud, Label::kNormal, Label::kNormal};
  CHECK(roc_auc(s, y) == 1.0);

  // TPR 1.0, TNR 0.25
  const std::vector<Label> gold{Label::kFraud, Label::kFraud, Label::kNormal, Label::kNormal,
                                Label::kNormal, Label::kNormal};
  const std::vector<Label> pred{Label::kFraud, Label::kFraud, Label::kFraud, Label::kFraud,
                                Label::kFraud, Label::kNormal};
  const std::vector<double> scores{1, 1, 1, 1, 1, -1};
  const auto r = compute_metrics(scores, pred, gold);
  CHECK(r.tp == 2);
  CHECK(r.fn == 0);
  CHECK(r.fp == 3);
  CHECK(r.tn == 1);
  CHECK(r.n_eval == 6);
  CHECK(*r.recall == 1.0);
  CHECK(*r.g_mean == 0.5);
  CHECK(EvalReport::from_json(r.to_json()) == r);

  const std::vector<Label> half{Label::kFraud, Label::kFraud, Label::kFraud, Label::kNormal};
  const std::vector<Label> half_pred{Label::kFraud, Label::kNormal, Label::kNormal, Label::kNormal};
  const auto r2 = compute_metrics(std::vector<double>{3, 2, 1, 0}, half_pred, half);
  CHECK(*r2.recall == 1.0 / 3.0);
  CHECK(*r2.g_mean == std::sqrt(1.0 / 3.0));

  const std::vector<Label> only_normal(3, Label::kNormal);
  const auto single = compute_metrics(std::vector<double>{1, 2, 3}, only_normal, only_normal);
  CHECK_FALSE(single.auc.has_value());
  CHECK_FALSE(single.recall.has_value());
  CHECK_FALSE(single.g_mean.has_value());
  CHECK(single.tn == 3);
  CHECK(single.to_json()["auc"].is_null());
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1, 2, 3}, only_normal), Error);
  CHECK_THROWS_AS(compute_metrics(std::vector<double>{}, std::vector<Label>{}, std::vector<Label>{}),
                  Error);
}

TEST_CASE("rank AUC matches the pairwise oracle with ties") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(6)) * 0.25;  // heavy ties
      y[i] = rng.bernoulli(0.3) ? Label::kFraud : Label::kNormal;
    }
    y[0] = Label::kFraud;
    y[1] = Label::kNormal;
    const double oracle = lgspf::testing::pairwise_auc(s, as_ints(y));
    CHECK(std::abs(roc_auc(s, y) - oracle) <= 1e-12);

    std::vector<double> moved(n);
    for (std::size_t i = 0; i < n; ++i) moved[i] = std::exp(s[i]) - 7.0;
    CHECK(roc_auc(moved, y) == roc_auc(s, y));
  }
}
