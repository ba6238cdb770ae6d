// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "graph_fixtures.hpp"
#include "lgspf/dataio.hpp"
#include "lgspf/encoder.hpp"
#include "lgspf/harness.hpp"
#include "lgspf/objective.hpp"
#include "lgspf/prompt.hpp"
#include "oracles.hpp"
#include "pipeline_fixtures.hpp"
#include "sage_oracle.hpp"
#include "test_util.hpp"

using namespace lgspf;
using graph::Label;
using graph::NodeId;
using lgspf::testing::random_matrix;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Collects every failure reason; later checks still run after a failure.
class Tally {
 public:
  void check(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) failures_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_.empty()) return {true, summary + " (" + std::to_string(checks_) + " checks)"};
    std::string detail = std::to_string(failures_.size()) + "/" + std::to_string(checks_) + " checks failed:";
    for (std::size_t i = 0; i < failures_.size(); ++i) detail += (i ? "; " : " ") + failures_[i];
    return {false, detail};
  }

 private:
  std::size_t checks_ = 0;
  std::vector<std::string> failures_;
};

lm::DecoderModel micro_lm(std::size_t vocab, Rng& rng) {
  lm::DecoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.max_seq_len = 64;
  return lm::DecoderModel(cfg, vocab, rng);
}

Outcome partition_algebra() {
  const auto t0 = Clock::now();
  Rng rng(101);
  Tally t;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    const std::size_t m = 1 + rng.below(5);
    const auto g = lgspf::testing::random_graph(rng, n, m, rng.uniform(0.0, 0.3));
    t.check(lgspf::testing::partition_matches(g, graph::partition_relations(g)),
            "graph " + std::to_string(trial));
  }
  const double s = seconds_since(t0);
  t.check(s < 5.0, "runtime " + num(s, 2) + " s");
  return t.outcome("200 graphs, union and disjointness exact");
}

Outcome temporal_edges() {
  const auto t0 = Clock::now();
  Rng rng(102);
  Tally t;
  for (int trial = 0; trial < 100; ++trial) {
    const auto table = lgspf::testing::random_table(rng, 5 + rng.below(40), 1 + rng.below(4));
    for (std::size_t k : {1u, 2u, 3u}) {
      for (const char* key : {"Source", "Target"}) {
        const auto edges = io::build_temporal_edges(table, key, k);
        const std::set<graph::Edge> got(edges.begin(), edges.end());
        t.check(got.size() == edges.size(), "duplicate edges");
        t.check(got == lgspf::testing::temporal_oracle(table, table.key_index(key), k),
                "table " + std::to_string(trial) + " k=" + std::to_string(k));
      }
    }
  }
  const double s = seconds_since(t0);
  t.check(s < 5.0, "runtime " + num(s, 2) + " s");
  return t.outcome("100 tables, k in {1,2,3}, oracle-exact");
}

Outcome aggregation_oracle() {
  Rng rng(103);
  Tally t;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    auto lists = lgspf::testing::random_lists(rng, n, 0.4);
    const Matrix x = random_matrix(n, 5, rng, -5.0, 5.0);
    const Matrix got = encoder::mean_aggregate(graph::SubgraphView::from_lists(0, lists), x);
    const double diff = max_abs_diff(got, lgspf::testing::dense_mean_oracle(lists, x));
    worst = std::max(worst, diff);
    t.check(diff <= 1e-12, "view " + std::to_string(trial) + " differs by " + std::to_string(diff));
    for (auto& l : lists) rng.shuffle(l);
    t.check(encoder::mean_aggregate(graph::SubgraphView::from_lists(0, lists), x) == got,
            "neighbor order changed the result");
  }
  return t.outcome("max deviation " + sci(worst));
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const auto data = lgspf::testing::tiny_dataset();
  harness::Pipeline p(lgspf::testing::tiny_config(), 5, 2, lgspf::testing::tiny_templates());
  Rng rng(104);
  for (auto& a : p.lm().adapters()) a.b.value = random_matrix(a.b.value.rows(), a.b.value.cols(), rng, -0.3, 0.3);
  const std::vector<NodeId> batch{0, 3, 4, 7};
  {
    ad::Tape tape;
    tape.backward(p.batch_loss(tape, data, batch));
  }
  Tally t;
  double worst = 0.0;
  auto sample = [&](Parameter& param, const std::string& group) {
    for (int i = 0; i < 20; ++i) {
      const std::size_t idx = rng.below(param.value.size());
      double& w = param.value.values()[idx];
      const double numeric = lgspf::testing::central_difference([&] { return p.batch_loss(data, batch); }, w);
      const double err = lgspf::testing::gradient_rel_error(param.grad.values()[idx], numeric);
      worst = std::max(worst, err);
      t.check(err <= 1e-3, group + " " + param.name + " rel error " + std::to_string(err));
    }
  };
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t l = 0; l < 2; ++l) sample(p.sage().weight(r, l), "encoder");
  }
  for (auto& a : p.lm().adapters()) {
    sample(a.a, "lora");
    sample(a.b, "lora");
  }
  const double s = seconds_since(t0);
  t.check(s < 60.0, "runtime " + num(s, 2) + " s");
  return t.outcome("worst rel error " + sci(worst));
}

Outcome masking_and_injection() {
  Rng rng(105);
  Tally t;
  // Loss ignores the label bytes at unsupervised positions.
  auto model = micro_lm(9, rng);
  for (auto& a : model.adapters()) a.b.value = random_matrix(8, a.b.value.cols(), rng, -0.5, 0.5);
  const Matrix prompt = random_matrix(7, 8, rng);
  const std::vector<lm::TokenId> answer{2, 5};
  const auto seq = objective::teacher_forced(model, prompt, answer);
  const double base = objective::masked_logprob(model, seq);
  t.check(objective::training_loss(model, prompt, {answer, {4}}, Label::kFraud) == -base, "loss != -logprob");
  for (int trial = 0; trial < 50; ++trial) {
    auto altered = seq;
    for (std::size_t i = 0; i < altered.labels.size(); ++i) {
      if (!altered.loss_mask[i]) altered.labels[i] = static_cast<lm::TokenId>(rng.below(9));
    }
    t.check(objective::masked_logprob(model, altered) == base, "prompt labels changed the loss");
  }

  // Injection rewrites exactly the slot rows.
  for (std::size_t m = 1; m <= 5; ++m) {
    const Matrix temp = random_matrix(40, 8, rng);
    const Matrix rows = random_matrix(m, 8, rng, 2.0, 3.0);
    std::vector<std::size_t> positions;
    while (positions.size() < m) {
      const std::size_t p = rng.below(40);
      if (std::find(positions.begin(), positions.end(), p) == positions.end()) positions.push_back(p);
    }
    const Matrix out = prompt::inject_structure(temp, rows, positions);
    std::size_t changed = 0;
    for (std::size_t r = 0; r < 40; ++r) {
      const auto it = std::find(positions.begin(), positions.end(), r);
      bool differs = false;
      for (std::size_t c = 0; c < 8; ++c) {
        const double want = it == positions.end() ? temp(r, c) : rows(it - positions.begin(), c);
        t.check(out(r, c) == want, "row " + std::to_string(r) + " wrong after injection");
        differs |= out(r, c) != temp(r, c);
      }
      changed += differs;
    }
    t.check(changed == m, "injection changed " + std::to_string(changed) + " rows, expected " + std::to_string(m));
  }

  // Zero-initialized adapters leave the logits untouched.
  auto fresh = micro_lm(11, rng);
  const Matrix x = random_matrix(9, 8, rng);
  t.check(fresh.forward_logits(x, true) == fresh.forward_logits(x, false), "LoRA at init changed logits");
  return t.outcome("label masking, exhaustive injection diff, zero-init adapters");
}

Outcome probability_soundness() {
  Rng rng(106);
  Tally t;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto model = micro_lm(6 + trial, rng);
    const Matrix lp = ad::log_softmax_rows(model.forward_logits(random_matrix(3 + trial, 8, rng)));
    for (std::size_t r = 0; r < lp.rows(); ++r) {
      double s = 0.0;
      for (double v : lp.row(r)) s += std::exp(v);
      worst = std::max(worst, std::abs(s - 1.0));
      t.check(std::abs(s - 1.0) <= 1e-9, "softmax row sums to " + std::to_string(s));
    }
  }
  auto model = micro_lm(6, rng);
  model.embedding().value = random_matrix(6, 8, rng, -1.5, 1.5);
  for (auto& a : model.adapters()) a.b.value = random_matrix(8, a.b.value.cols(), rng, -0.5, 0.5);
  const Matrix prompt = random_matrix(5, 8, rng);
  double total = 0.0;
  for (lm::TokenId a = 0; a < 6; ++a) {
    for (lm::TokenId b = 0; b < 6; ++b) {
      total += std::exp(objective::sequence_logprob(model, prompt, std::vector<lm::TokenId>{a, b}));
    }
  }
  t.check(std::abs(total - 1.0) <= 1e-9, "length-2 completions sum to " + std::to_string(total));
  return t.outcome("max row deviation " + sci(worst) + ", 36 completions sum to 1 within " +
                   sci(std::abs(total - 1.0)));
}

Outcome metric_oracles() {
  Rng rng(107);
  Tally t;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(60);
    std::vector<double> s(n);
    std::vector<Label> y(n);
    std::vector<int> yi(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8)) * 0.125;
      y[i] = (i == 0 || (i > 1 && rng.bernoulli(0.3))) ? Label::kFraud : Label::kNormal;
      yi[i] = y[i] == Label::kFraud;
    }
    const double err = std::abs(objective::roc_auc(s, y) - lgspf::testing::pairwise_auc(s, yi));
    t.check(err <= 1e-12, "AUC off by " + std::to_string(err));
  }
  // 2 TP, 0 FN, 3 FP, 1 TN: recall 1, TNR 1/4, G-Mean 1/2.
  const std::vector<Label> gold{Label::kFraud, Label::kFraud, Label::kNormal,
                                Label::kNormal, Label::kNormal, Label::kNormal};
  const std::vector<Label> pred{Label::kFraud, Label::kFraud, Label::kFraud,
                                Label::kFraud, Label::kFraud, Label::kNormal};
  const auto r = objective::compute_metrics(std::vector<double>{1, 1, 1, 1, 1, -1}, pred, gold);
  t.check(r.tp == 2 && r.fn == 0 && r.fp == 3 && r.tn == 1, "confusion counts");
  t.check(r.recall && *r.recall == 1.0, "recall");
  t.check(r.g_mean && *r.g_mean == 0.5, "g-mean");
  // 1 TP, 2 FN, 0 FP, 1 TN: recall 1/3, G-Mean sqrt(1/3).
  const auto r2 = objective::compute_metrics(
      std::vector<double>{3, 2, 1, 0}, std::vector<Label>{Label::kFraud, Label::kNormal, Label::kNormal, Label::kNormal},
      std::vector<Label>{Label::kFraud, Label::kFraud, Label::kFraud, Label::kNormal});
  t.check(r2.recall && *r2.recall == 1.0 / 3.0, "recall 1/3");
  t.check(r2.g_mean && *r2.g_mean == std::sqrt(1.0 / 3.0), "g-mean sqrt(1/3)");
  return t.outcome("50 tied score sets within 1e-12, hand confusion cases exact");
}

Outcome ablation_mechanics() {
  const auto data = lgspf::testing::tiny_dataset();
  const auto splits = lgspf::testing::tiny_splits();
  Tally t;
  const auto joint_cfg = lgspf::testing::tiny_config(harness::Mode::kWoJoint);
  harness::Pipeline init(joint_cfg, 5, 2, lgspf::testing::tiny_templates());
  auto p = harness::train(data, splits, joint_cfg, lgspf::testing::tiny_templates());
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t l = 0; l < 2; ++l) {
      t.check(p.sage().weight(r, l).value == init.sage().weight(r, l).value,
              "wo_joint moved " + p.sage().weight(r, l).name);
    }
  }
  std::size_t lora_moved = 0;
  for (auto& a : p.lm().adapters()) lora_moved += !(a.b.value == Matrix(a.b.value.rows(), a.b.value.cols()));
  t.check(lora_moved > 0, "wo_joint did not train the adapters");

  auto q = harness::train(data, splits, lgspf::testing::tiny_config(harness::Mode::kWoLlm),
                          lgspf::testing::tiny_templates());
  harness::evaluate(q, data, splits.test);
  t.check(q.lm().forward_count() == 0, "wo_llm ran the LM " + std::to_string(q.lm().forward_count()) + " times");
  return t.outcome("encoder frozen under wo_joint, LM forward count 0 under wo_llm");
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  const auto templates =
      harness::Templates{prompt::read_template(std::filesystem::path(LGSPF_DATA_DIR) / "templates" / "synthetic.json"),
                         std::nullopt};
  Tally t;
  std::size_t full_wins = 0;
  std::string lines;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    io::SynthSpec spec;  // n=300, m=3, fraud rate 0.1, signal (0.9, 0.5, 0.0)
    spec.seed = seed;
    const harness::Dataset data(io::synth_fraud_graph(spec).graph);
    const auto splits = graph::stratified_split(data.graph, {}, seed);
    const double oracle = lgspf::testing::sage_mlp_oracle(data.graph, splits, seed).test_auc;
    t.check(oracle >= 0.90, "seed " + std::to_string(seed) + " oracle AUC " + num(oracle));

    harness::TrainConfig cfg;
    cfg.seed = seed;
    auto p = harness::train(data, splits, cfg, templates);
    const double full = *harness::evaluate(p, data, splits.test).report.auc;
    t.check(full >= 0.90, "seed " + std::to_string(seed) + " full AUC " + num(full) + " < 0.90 (best epoch " +
                              std::to_string(p.best_epoch) + " of " + std::to_string(p.history.size() - 1) + ")");
    double best_single = 0.0;
    std::string views;
    for (std::size_t j = 0; j < 3; ++j) {
      const double a = *harness::run_single_view(data, splits, cfg, templates, j).report.auc;
      best_single = std::max(best_single, a);
      views += (j ? "/" : "") + num(a);
    }
    full_wins += full >= best_single;
    lines += "; seed " + std::to_string(seed) + ": oracle " + num(oracle) + " full " + num(full) + " (epoch " +
             std::to_string(p.best_epoch) + ") views " + views;
  }
  t.check(full_wins >= 2, "full view >= best single view on " + std::to_string(full_wins) + " of 3 seeds");
  const double s = seconds_since(t0);
  t.check(s <= 600.0, "runtime " + num(s, 1) + " s");
  Outcome o = t.outcome("full >= best single view on " + std::to_string(full_wins) + "/3 seeds");
  o.detail += " |" + lines.substr(1);
  return o;
}

Outcome determinism_and_persistence() {
  const auto data = lgspf::testing::tiny_dataset();
  const auto splits = lgspf::testing::tiny_splits();
  Tally t;
  for (harness::Mode m : {harness::Mode::kFull, harness::Mode::kWoLlm, harness::Mode::kFlattened}) {
    const auto cfg = lgspf::testing::tiny_config(m);
    auto a = harness::train(data, splits, cfg, lgspf::testing::tiny_templates());
    auto b = harness::train(data, splits, cfg, lgspf::testing::tiny_templates());
    const auto ra = harness::evaluate(a, data, splits.test);
    const auto rb = harness::evaluate(b, data, splits.test);
    t.check(ra.report.to_json().dump() == rb.report.to_json().dump(), harness::mode_name(m) + " report differs");
    t.check(a.history == b.history, harness::mode_name(m) + " loss curve differs");

    lgspf::testing::ScratchDir dir("acceptance_" + harness::mode_name(m));
    harness::save_checkpoint(a, dir.path());
    auto c = harness::load_checkpoint(dir.path());
    const auto rc = harness::evaluate(c, data, splits.test);
    t.check(rc.scores == ra.scores && rc.predictions == ra.predictions,
            harness::mode_name(m) + " checkpoint reload changed scores");
  }
  return t.outcome("identical reports per seed, bit-identical reload");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"partition algebra", partition_algebra},
      {"temporal edges", temporal_edges},
      {"aggregation oracle", aggregation_oracle},
      {"end-to-end gradient check", gradient_check},
      {"masking and injection", masking_and_injection},
      {"probability soundness", probability_soundness},
      {"metric oracles", metric_oracles},
      {"ablation mechanics", ablation_mechanics},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"determinism and persistence", determinism_and_persistence},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-28s %6.2f s  %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
