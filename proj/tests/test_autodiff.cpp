// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "lgspf/autodiff.hpp"
#include "test_util.hpp"

using namespace lgspf;
using lgspf::testing::central_difference;
using lgspf::testing::gradient_rel_error;
using lgspf::testing::random_matrix;

namespace {

using Builder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Reduces an arbitrary output to a scalar with a fixed random linear map so
// that every output coordinate contributes a distinct weight.
ad::Var project(ad::Var out, std::uint64_t seed) {
  Rng rng(seed);
  ad::Var r = out.tape().constant(random_matrix(3, out.cols(), rng));
  return ad::sum(ad::matmul_nt(out, r));
}

double evaluate(std::vector<Parameter>& params, const Builder& build) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (auto& p : params) vars.push_back(tape.parameter(p));
  return project(build(tape, vars), 99).value()(0, 0);
}

void check_gradients(std::vector<Parameter>& params, const Builder& build,
                     double tol = 1e-6) {
  for (auto& p : params) {
    p.trainable = true;
    p.zero_grad();
  }
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (auto& p : params) vars.push_back(tape.parameter(p));
    tape.backward(project(build(tape, vars), 99));
  }
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double numeric = central_difference(
          [&] { return evaluate(params, build); }, p.value.data()[i]);
      CAPTURE(p.name);
      CAPTURE(i);
      CHECK(gradient_rel_error(p.grad.data()[i], numeric) < tol);
    }
  }
}

std::vector<Parameter> make_params(std::initializer_list<std::pair<std::size_t, std::size_t>> shapes,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Parameter> out;
  int i = 0;
  for (auto [r, c] : shapes) {
    out.emplace_back("p" + std::to_string(i++), random_matrix(r, c, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("linear algebra ops have correct gradients") {
  auto ps = make_params({{4, 5}, {3, 5}, {5, 2}, {1, 3}}, 1);
  check_gradients(ps, [](ad::Tape&, std::vector<ad::Var>& v) {
    ad::Var y = ad::matmul_nt(v[0], v[1]);       // 4x3
    y = ad::add_row(y, v[3]);
    ad::Var z = ad::matmul(v[0], v[2]);          // 4x2
    return ad::concat_cols(ad::scale(y, 0.7), z);
  });
}

TEST_CASE("pointwise nonlinearities have correct gradients") {
  auto ps = make_params({{5, 4}}, 2);
  for (double& v : ps[0].value.values()) v *= 3.0;  // cover both ELU branches
  check_gradients(ps, [](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::add(ad::elu(v[0]), ad::silu(v[0]));
  });
}

TEST_CASE("row gather, replace and stack route gradients to the right rows") {
  auto ps = make_params({{6, 3}, {2, 3}, {4, 3}}, 3);
  check_gradients(ps, [](ad::Tape&, std::vector<ad::Var>& v) {
    ad::Var g = ad::gather_rows(v[0], {5, 1, 1, 0});
    ad::Var r = ad::replace_rows(g, v[1], {2, 0});
    return ad::vstack({r, v[2], ad::rescale_rows(v[2], 2.5)});
  });
}

TEST_CASE("rms_norm and rope have correct gradients") {
  auto ps = make_params({{7, 8}, {1, 8}}, 4);
  const auto layout = [] {
    ad::SeqLayout l;
    l.append(3);
    l.append(4);
    return l;
  }();
  check_gradients(ps, [layout](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::rope(ad::rms_norm(v[0], v[1]), layout, 2, 10000.0);
  });
}

TEST_CASE("causal attention has correct gradients") {
  auto ps = make_params({{9, 8}, {9, 8}, {9, 8}}, 5);
  ad::SeqLayout layout;
  layout.append(4);
  layout.append(5);
  check_gradients(ps, [layout](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::causal_attention(v[0], v[1], v[2], layout, 2);
  });
}

TEST_CASE("causal attention with a shared prefix has correct gradients") {
  auto ps = make_params({{10, 8}, {10, 8}, {10, 8}}, 15);
  ad::SeqLayout layout = ad::SeqLayout::shared(4);
  layout.append(2);
  layout.append(4);
  check_gradients(ps, [layout](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::causal_attention(ad::rope(v[0], layout, 2, 10000.0), ad::rope(v[1], layout, 2, 10000.0),
                                v[2], layout, 2);
  });
}

TEST_CASE("shared-prefix packing reproduces separate sequences exactly") {
  Rng rng(16);
  const std::size_t prefix = 5;
  const std::vector<std::size_t> own{3, 1, 4};
  Matrix q = random_matrix(prefix + 8, 8, rng), k = random_matrix(prefix + 8, 8, rng),
         v = random_matrix(prefix + 8, 8, rng);
  ad::SeqLayout packed = ad::SeqLayout::shared(prefix);
  for (std::size_t n : own) packed.append(n);

  // Separate layout: prefix rows repeated in front of each sequence.
  std::vector<std::size_t> rows;
  ad::SeqLayout separate;
  for (std::size_t s = 0; s < own.size(); ++s) {
    for (std::size_t r = 0; r < prefix; ++r) rows.push_back(r);
    for (std::size_t r = 0; r < own[s]; ++r) rows.push_back(packed.starts[s] + r);
    separate.append(prefix + own[s]);
  }
  auto run = [](const Matrix& q, const Matrix& k, const Matrix& v, const ad::SeqLayout& l) {
    ad::Tape t(false);
    return ad::causal_attention(ad::rope(t.view(q), l, 2, 10000.0), ad::rope(t.view(k), l, 2, 10000.0),
                                t.view(v), l, 2)
        .value();
  };
  ad::Tape t(false);
  auto gather = [&](const Matrix& m) { return ad::gather_rows(t.view(m), rows).value(); };
  const Matrix a = run(q, k, v, packed);
  const Matrix b = run(gather(q), gather(k), gather(v), separate);
  for (std::size_t s = 0; s < own.size(); ++s) {
    for (std::size_t r = 0; r < prefix; ++r) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(b(separate.starts[s] + r, c) == a(r, c));
    }
    for (std::size_t r = 0; r < own[s]; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(b(separate.starts[s] + prefix + r, c) == a(packed.starts[s] + r, c));
      }
    }
  }
  CHECK(packed.max_length() == prefix + 4);
  CHECK(packed.total_rows() == prefix + 8);
}

TEST_CASE("log_softmax_pick has correct gradients and value") {
  auto ps = make_params({{3, 6}}, 6);
  check_gradients(ps, [](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::log_softmax_pick(v[0], {0, 5, 2});
  });
  ad::Tape t;
  ad::Var uniform = t.constant(Matrix(2, 10, 0.0));
  CHECK(ad::log_softmax_pick(uniform, {3, 7}).value()(0, 0) ==
        doctest::Approx(2.0 * std::log(0.1)).epsilon(1e-14));
}

TEST_CASE("causal attention output at row i ignores later rows exactly") {
  Rng rng(8);
  Matrix q = random_matrix(6, 8, rng), k = random_matrix(6, 8, rng),
         v = random_matrix(6, 8, rng);
  const auto layout = ad::SeqLayout::uniform(1, 6);
  ad::Tape t1;
  Matrix base = ad::causal_attention(t1.constant(q), t1.constant(k), t1.constant(v), layout, 2).value();
  for (std::size_t c = 0; c < 8; ++c) {
    k(4, c) += 10.0;
    v(4, c) -= 3.0;
    q(4, c) *= -2.0;
  }
  ad::Tape t2;
  Matrix mutated = ad::causal_attention(t2.constant(q), t2.constant(k), t2.constant(v), layout, 2).value();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 8; ++c) CHECK(mutated(r, c) == base(r, c));
  }
  CHECK(mutated(4, 0) != base(4, 0));
}

TEST_CASE("frozen parameters receive no gradient") {
  Rng rng(9);
  Parameter frozen("w", random_matrix(3, 3, rng), false);
  Parameter live("x", random_matrix(2, 3, rng), true);
  ad::Tape t;
  ad::Var y = ad::matmul_nt(t.parameter(live), t.parameter(frozen));
  t.backward(ad::sum(y));
  CHECK(frozen.grad.empty());
  CHECK(frozen.grad_writes == 0);
  CHECK(live.grad_writes == 1);
}

TEST_CASE("backward rejects non-scalar roots") {
  ad::Tape t;
  Parameter p("p", Matrix(2, 2, 1.0), true);
  CHECK_THROWS_AS(t.backward(t.parameter(p)), Error);
}
