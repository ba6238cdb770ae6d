// SPDX-License-Identifier: Apache-2.0
#include "lgspf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "lgspf/kernels.hpp"

namespace lgspf {

void Parameter::zero_grad() {
  if (grad.same_shape(value)) {
    grad.set_zero();
  } else {
    grad = Matrix(value.rows(), value.cols());
  }
}

namespace ad {

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = &p.value;
  n.requires_grad = p.trainable && grad_enabled_;
  n.param = n.requires_grad ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::view(const Matrix& value) {
  Node n;
  n.value = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) {
    const Matrix& val = value(v);
    n.grad = Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().rows() != 1 || root.value().cols() != 1) {
    throw Error("Tape::backward: root must be 1x1, got " + shape_string(root.value()));
  }
  if (!requires_grad(root)) return;
  grad(root)(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (!p.grad.same_shape(p.value)) p.grad = Matrix(p.value.rows(), p.value.cols());
      kernels::axpy(1.0, n.grad.values(), p.grad.values());
      ++p.grad_writes;
    }
    // Intermediate gradients are no longer needed once propagated.
    if (n.param == nullptr && !n.retain) n.grad = Matrix();
  }
}

SeqLayout SeqLayout::uniform(std::size_t count, std::size_t length) {
  SeqLayout l;
  for (std::size_t i = 0; i < count; ++i) l.append(length);
  return l;
}

void SeqLayout::append(std::size_t length) {
  starts.push_back(total_rows());
  lengths.push_back(length);
}

SeqLayout SeqLayout::shared(std::size_t prefix_rows) {
  SeqLayout l;
  l.prefix = prefix_rows;
  return l;
}

std::size_t SeqLayout::total_rows() const {
  return lengths.empty() ? prefix : starts.back() + lengths.back();
}

std::size_t SeqLayout::max_length() const {
  std::size_t m = prefix;
  for (std::size_t l : lengths) m = std::max(m, prefix + l);
  return m;
}

namespace {

void add_into(Matrix& dst, const Matrix& src) {
  kernels::axpy(1.0, src.values(), dst.values());
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                shape_string(b));
  }
}

void require_layout(const SeqLayout& layout, const Matrix& x, const char* op) {
  if (layout.total_rows() != x.rows()) {
    throw Error(std::string(op) + ": layout covers " +
                std::to_string(layout.total_rows()) + " rows, input has " +
                std::to_string(x.rows()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Matrix out = a.value();
  add_into(out, b.value());
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape().push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) add_into(t.grad(a), g);
    if (b.requires_grad()) add_into(t.grad(b), g);
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= s;
  return a.tape().push(std::move(out), a.requires_grad(), [a, s](Tape& t, const Matrix& g) {
    kernels::axpy(s, g.values(), t.grad(a).values());
  });
}

Var matmul_nt(Var x, Var w) {
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  if (xv.cols() != wv.cols()) {
    throw Error("matmul_nt: input " + shape_string(xv) + " incompatible with weight " +
                shape_string(wv));
  }
  Matrix out = lgspf::matmul_nt(xv, wv);
  const bool rg = x.requires_grad() || w.requires_grad();
  return x.tape().push(std::move(out), rg, [x, w](Tape& t, const Matrix& g) {
    const Matrix& xv = x.value();
    const Matrix& wv = w.value();
    const auto& k = kernels::active();
    if (x.requires_grad()) {
      Matrix& dx = t.grad(x);
      k.gemm_nn(g.rows(), wv.cols(), g.cols(), g.data(), g.cols(), wv.data(),
                wv.cols(), dx.data(), dx.cols());
    }
    if (w.requires_grad()) {
      Matrix& dw = t.grad(w);
      k.gemm_tn(wv.rows(), wv.cols(), g.rows(), g.data(), g.cols(), xv.data(),
                xv.cols(), dw.data(), dw.cols());
    }
  });
}

Var matmul(Var a, Var b) {
  Matrix out = lgspf::matmul(a.value(), b.value());
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape().push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const auto& k = kernels::active();
    if (a.requires_grad()) {
      Matrix& da = t.grad(a);
      k.gemm_nt(av.rows(), av.cols(), g.cols(), g.data(), g.cols(), bv.data(),
                bv.cols(), da.data(), da.cols());
    }
    if (b.requires_grad()) {
      Matrix& db = t.grad(b);
      k.gemm_tn(bv.rows(), bv.cols(), av.rows(), av.data(), av.cols(), g.data(),
                g.cols(), db.data(), db.cols());
    }
  });
}

Var add_row(Var x, Var bias) {
  const Matrix& xv = x.value();
  require_shape(bias.value(), 1, xv.cols(), "add_row bias");
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    kernels::axpy(1.0, bias.value().row(0), out.row(r));
  }
  const bool rg = x.requires_grad() || bias.requires_grad();
  return x.tape().push(std::move(out), rg, [x, bias](Tape& t, const Matrix& g) {
    if (x.requires_grad()) add_into(t.grad(x), g);
    if (bias.requires_grad()) {
      Matrix& db = t.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(1.0, g.row(r), db.row(0));
    }
  });
}

Var elu(Var x, double alpha) {
  Matrix out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : alpha * std::expm1(v);
  return x.tape().push(std::move(out), x.requires_grad(), [x, alpha](Tape& t, const Matrix& g) {
    const Matrix& xv = x.value();
    Matrix& dx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv.data()[i];
      dx.data()[i] += g.data()[i] * (v > 0.0 ? 1.0 : alpha * std::exp(v));
    }
  });
}

Var silu(Var x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv.data()[i];
    out.data()[i] = v / (1.0 + std::exp(-v));
  }
  return x.tape().push(std::move(out), x.requires_grad(), [x](Tape& t, const Matrix& g) {
    const Matrix& xv = x.value();
    Matrix& dx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv.data()[i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      dx.data()[i] += g.data()[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

Var concat_cols(Var a, Var b) { return concat_cols(std::vector<Var>{a, b}); }

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row counts differ");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + off);
    }
    off += pv.cols();
  }
  return parts.front().tape().push(std::move(out), rg, [parts](Tape& t, const Matrix& g) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t c = p.cols();
      if (p.requires_grad()) {
        Matrix& dp = t.grad(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          kernels::axpy(1.0, g.row(r).subspan(off, c), dp.row(r));
        }
      }
      off += c;
    }
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("vstack: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error("vstack: column counts differ");
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  double* dst = out.data();
  for (const Var& p : parts) {
    dst = std::copy(p.value().data(), p.value().data() + p.value().size(), dst);
  }
  return parts.front().tape().push(std::move(out), rg, [parts](Tape& t, const Matrix& g) {
    const double* src = g.data();
    for (const Var& p : parts) {
      const std::size_t n = p.value().size();
      if (p.requires_grad()) {
        kernels::active().axpy(1.0, src, t.grad(p).data(), n);
      }
      src += n;
    }
  });
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  const Matrix& xv = x.value();
  Matrix out(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) {
      throw Error("gather_rows: row " + std::to_string(rows[i]) + " out of range " +
                  std::to_string(xv.rows()));
    }
    std::copy(xv.row(rows[i]).begin(), xv.row(rows[i]).end(), out.row(i).begin());
  }
  return x.tape().push(std::move(out), x.requires_grad(),
                       [x, rows = std::move(rows)](Tape& t, const Matrix& g) {
                         Matrix& dx = t.grad(x);
                         for (std::size_t i = 0; i < rows.size(); ++i) {
                           kernels::axpy(1.0, g.row(i), dx.row(rows[i]));
                         }
                       });
}

Var replace_rows(Var base, Var rows, std::vector<std::size_t> positions) {
  const Matrix& bv = base.value();
  const Matrix& rv = rows.value();
  if (rv.rows() != positions.size() || rv.cols() != bv.cols()) {
    throw Error("replace_rows: " + std::to_string(positions.size()) +
                " positions for rows " + shape_string(rv) + " into " + shape_string(bv));
  }
  std::vector<char> seen(bv.rows(), 0);
  for (std::size_t p : positions) {
    if (p >= bv.rows()) {
      throw Error("replace_rows: position " + std::to_string(p) + " out of range " +
                  std::to_string(bv.rows()));
    }
    if (seen[p]) throw Error("replace_rows: position " + std::to_string(p) + " repeated");
    seen[p] = 1;
  }
  Matrix out = bv;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    std::copy(rv.row(i).begin(), rv.row(i).end(), out.row(positions[i]).begin());
  }
  const bool rg = base.requires_grad() || rows.requires_grad();
  return base.tape().push(
      std::move(out), rg,
      [base, rows, positions = std::move(positions),
       seen = std::move(seen)](Tape& t, const Matrix& g) {
        if (base.requires_grad()) {
          Matrix& db = t.grad(base);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            if (!seen[r]) kernels::axpy(1.0, g.row(r), db.row(r));
          }
        }
        if (rows.requires_grad()) {
          Matrix& dr = t.grad(rows);
          for (std::size_t i = 0; i < positions.size(); ++i) {
            kernels::axpy(1.0, g.row(positions[i]), dr.row(i));
          }
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  Matrix out(1, 1, s);
  return x.tape().push(std::move(out), x.requires_grad(), [x](Tape& t, const Matrix& g) {
    Matrix& dx = t.grad(x);
    const double gv = g(0, 0);
    for (double& v : dx.values()) v += gv;
  });
}

Var rescale_rows(Var x, double target) {
  const Matrix& xv = x.value();
  Matrix out = xv;
  std::vector<double> norms(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    norms[r] = std::sqrt(kernels::dot(xv.row(r), xv.row(r)));
    if (norms[r] > 0.0) {
      for (double& v : out.row(r)) v *= target / norms[r];
    }
  }
  return x.tape().push(std::move(out), x.requires_grad(),
                       [x, target, norms = std::move(norms)](Tape& t, const Matrix& g) {
                         const Matrix& xv = x.value();
                         Matrix& dx = t.grad(x);
                         for (std::size_t r = 0; r < xv.rows(); ++r) {
                           if (norms[r] <= 0.0) continue;
                           const double inv = 1.0 / norms[r];
                           const double proj = kernels::dot(xv.row(r), g.row(r)) * inv * inv;
                           for (std::size_t c = 0; c < xv.cols(); ++c) {
                             dx(r, c) += target * inv * (g(r, c) - xv(r, c) * proj);
                           }
                         }
                       });
}

Var rms_norm(Var x, Var gain, double eps) {
  const Matrix& xv = x.value();
  const Matrix& gv = gain.value();
  require_shape(gv, 1, xv.cols(), "rms_norm gain");
  const std::size_t n = xv.cols();
  Matrix out(xv.rows(), n);
  std::vector<double> inv_rms(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const double ms = kernels::dot(xv.row(r), xv.row(r)) / static_cast<double>(n);
    inv_rms[r] = 1.0 / std::sqrt(ms + eps);
    for (std::size_t c = 0; c < n; ++c) out(r, c) = xv(r, c) * inv_rms[r] * gv(0, c);
  }
  const bool rg = x.requires_grad() || gain.requires_grad();
  return x.tape().push(
      std::move(out), rg,
      [x, gain, inv_rms = std::move(inv_rms)](Tape& t, const Matrix& g) {
        const Matrix& xv = x.value();
        const Matrix& gv = gain.value();
        const std::size_t n = xv.cols();
        if (gain.requires_grad()) {
          Matrix& dg = t.grad(gain);
          for (std::size_t r = 0; r < xv.rows(); ++r) {
            for (std::size_t c = 0; c < n; ++c) dg(0, c) += g(r, c) * xv(r, c) * inv_rms[r];
          }
        }
        if (x.requires_grad()) {
          Matrix& dx = t.grad(x);
          for (std::size_t r = 0; r < xv.rows(); ++r) {
            const double ir = inv_rms[r];
            double m = 0.0;
            for (std::size_t c = 0; c < n; ++c) m += g(r, c) * gv(0, c) * xv(r, c) * ir;
            m /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const double xhat = xv(r, c) * ir;
              dx(r, c) += ir * (g(r, c) * gv(0, c) - xhat * m);
            }
          }
        }
      });
}

namespace {

struct RopeTable {
  std::vector<double> cos, sin;  // [position][pair]
  std::size_t pairs = 0;
};

RopeTable make_rope_table(std::size_t max_len, std::size_t head_dim, double base) {
  RopeTable tab;
  tab.pairs = head_dim / 2;
  tab.cos.resize(max_len * tab.pairs);
  tab.sin.resize(max_len * tab.pairs);
  for (std::size_t p = 0; p < max_len; ++p) {
    for (std::size_t i = 0; i < tab.pairs; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) /
                                             static_cast<double>(head_dim));
      const double angle = static_cast<double>(p) * freq;
      tab.cos[p * tab.pairs + i] = std::cos(angle);
      tab.sin[p * tab.pairs + i] = std::sin(angle);
    }
  }
  return tab;
}

// sign = +1 applies the rotation, -1 its inverse (the transpose).
void apply_rope(const Matrix& in, Matrix& out, const SeqLayout& layout,
                std::size_t heads, const RopeTable& tab, double sign) {
  const std::size_t hd = in.cols() / heads;
  auto rotate = [&](std::size_t r, std::size_t pos) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tab.pairs; ++i) {
        const double c = tab.cos[pos * tab.pairs + i];
        const double sn = sign * tab.sin[pos * tab.pairs + i];
        const std::size_t col = h * hd + 2 * i;
        const double x0 = in(r, col);
        const double x1 = in(r, col + 1);
        out(r, col) += x0 * c - x1 * sn;
        out(r, col + 1) += x0 * sn + x1 * c;
      }
    }
  };
  for (std::size_t p = 0; p < layout.prefix; ++p) rotate(p, p);
  for (std::size_t s = 0; s < layout.count(); ++s) {
    for (std::size_t p = 0; p < layout.lengths[s]; ++p) {
      rotate(layout.starts[s] + p, layout.prefix + p);
    }
  }
}

}  // namespace

Var rope(Var x, const SeqLayout& layout, std::size_t heads, double base) {
  const Matrix& xv = x.value();
  require_layout(layout, xv, "rope");
  if (heads == 0 || xv.cols() % heads != 0 || (xv.cols() / heads) % 2 != 0) {
    throw Error("rope: width " + std::to_string(xv.cols()) +
                " not divisible into even-sized heads of " + std::to_string(heads));
  }
  auto tab = std::make_shared<RopeTable>(
      make_rope_table(layout.max_length(), xv.cols() / heads, base));
  Matrix out(xv.rows(), xv.cols());
  apply_rope(xv, out, layout, heads, *tab, 1.0);
  return x.tape().push(std::move(out), x.requires_grad(),
                       [x, layout, heads, tab](Tape& t, const Matrix& g) {
                         apply_rope(g, t.grad(x), layout, heads, *tab, -1.0);
                       });
}

namespace {

// One query block of attention: rows [self, self + len) attend to the context
// rows [0, ctx) and then causally to their own block.
struct AttnBlock {
  std::size_t ctx;
  std::size_t self;
  std::size_t len;
};

std::vector<AttnBlock> attention_blocks(const SeqLayout& layout) {
  std::vector<AttnBlock> out;
  if (layout.prefix > 0) out.push_back({0, 0, layout.prefix});
  for (std::size_t s = 0; s < layout.count(); ++s) {
    if (layout.lengths[s] > 0) out.push_back({layout.prefix, layout.starts[s], layout.lengths[s]});
  }
  return out;
}

}  // namespace

Var causal_attention(Var q, Var k, Var v, const SeqLayout& layout, std::size_t heads) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  require_same(qv, kv, "causal_attention q/k");
  require_same(qv, vv, "causal_attention q/v");
  require_layout(layout, qv, "causal_attention");
  if (heads == 0 || qv.cols() % heads != 0) {
    throw Error("causal_attention: width " + std::to_string(qv.cols()) +
                " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t d = qv.cols();
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto& kern = kernels::active();
  const auto blocks = attention_blocks(layout);

  // Attention probabilities per (block, head), len x (ctx + len); entries
  // past a row's causal limit are zero. Every kept score and every output
  // element follows the same reduction order as a row-at-a-time product, so
  // later rows never influence earlier ones.
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(blocks.size() * heads);
  Matrix out(qv.rows(), d);
  for (const AttnBlock& blk : blocks) {
    const std::size_t w = blk.ctx + blk.len;
    for (std::size_t h = 0; h < heads; ++h) {
      Matrix p(blk.len, w);
      const std::size_t col = h * hd;
      const double* qh = qv.data() + blk.self * d + col;
      if (blk.ctx > 0) kern.gemm_nt(blk.len, blk.ctx, hd, qh, d, kv.data() + col, d, p.data(), w);
      kern.gemm_nt(blk.len, blk.len, hd, qh, d, kv.data() + blk.self * d + col, d,
                   p.data() + blk.ctx, w);
      for (std::size_t i = 0; i < blk.len; ++i) {
        double* pi = p.data() + i * w;
        const std::size_t lim = blk.ctx + i + 1;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < lim; ++j) {
          pi[j] *= scale;
          mx = std::max(mx, pi[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < lim; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          z += pi[j];
        }
        for (std::size_t j = 0; j < lim; ++j) pi[j] /= z;
        std::fill(pi + lim, pi + w, 0.0);
      }
      double* oh = out.data() + blk.self * d + col;
      if (blk.ctx > 0) kern.gemm_nn(blk.len, hd, blk.ctx, p.data(), w, vv.data() + col, d, oh, d);
      kern.gemm_nn(blk.len, hd, blk.len, p.data() + blk.ctx, w, vv.data() + blk.self * d + col, d,
                   oh, d);
      probs->push_back(std::move(p));
    }
  }
  const bool rg = q.requires_grad() || k.requires_grad() || v.requires_grad();
  return q.tape().push(
      std::move(out), rg,
      [q, k, v, blocks, heads, probs, scale](Tape& t, const Matrix& g) {
        const Matrix& qv = q.value();
        const Matrix& kv = k.value();
        const Matrix& vv = v.value();
        const std::size_t d = qv.cols();
        const std::size_t hd = d / heads;
        const auto& kern = kernels::active();
        Matrix* dq = q.requires_grad() ? &t.grad(q) : nullptr;
        Matrix* dk = k.requires_grad() ? &t.grad(k) : nullptr;
        Matrix* dv = v.requires_grad() ? &t.grad(v) : nullptr;
        std::size_t idx = 0;
        for (const AttnBlock& blk : blocks) {
          const std::size_t w = blk.ctx + blk.len;
          const std::size_t self = blk.self * d;
          for (std::size_t h = 0; h < heads; ++h, ++idx) {
            const Matrix& p = (*probs)[idx];
            const std::size_t col = h * hd;
            const double* gh = g.data() + self + col;
            if (dv != nullptr) {
              if (blk.ctx > 0) {
                kern.gemm_tn(blk.ctx, hd, blk.len, p.data(), w, gh, d, dv->data() + col, d);
              }
              kern.gemm_tn(blk.len, hd, blk.len, p.data() + blk.ctx, w, gh, d,
                           dv->data() + self + col, d);
            }
            if (dq == nullptr && dk == nullptr) continue;
            Matrix ds(blk.len, w);
            if (blk.ctx > 0) kern.gemm_nt(blk.len, blk.ctx, hd, gh, d, vv.data() + col, d, ds.data(), w);
            kern.gemm_nt(blk.len, blk.len, hd, gh, d, vv.data() + self + col, d,
                         ds.data() + blk.ctx, w);
            for (std::size_t i = 0; i < blk.len; ++i) {
              double* dsi = ds.data() + i * w;
              const double* pi = p.data() + i * w;
              const std::size_t lim = blk.ctx + i + 1;
              double dotp = 0.0;
              for (std::size_t j = 0; j < lim; ++j) dotp += dsi[j] * pi[j];
              for (std::size_t j = 0; j < lim; ++j) dsi[j] = pi[j] * (dsi[j] - dotp) * scale;
              std::fill(dsi + lim, dsi + w, 0.0);
            }
            if (dq != nullptr) {
              double* dqh = dq->data() + self + col;
              if (blk.ctx > 0) kern.gemm_nn(blk.len, hd, blk.ctx, ds.data(), w, kv.data() + col, d, dqh, d);
              kern.gemm_nn(blk.len, hd, blk.len, ds.data() + blk.ctx, w, kv.data() + self + col, d,
                           dqh, d);
            }
            if (dk != nullptr) {
              const double* qh = qv.data() + self + col;
              if (blk.ctx > 0) {
                kern.gemm_tn(blk.ctx, hd, blk.len, ds.data(), w, qh, d, dk->data() + col, d);
              }
              kern.gemm_tn(blk.len, hd, blk.len, ds.data() + blk.ctx, w, qh, d,
                           dk->data() + self + col, d);
            }
          }
        }
      });
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < row.size(); ++c) out(r, c) = row[c] - lse;
  }
  return out;
}

Var log_softmax_pick(Var logits, std::vector<std::size_t> targets) {
  const Matrix& lv = logits.value();
  if (targets.size() != lv.rows()) {
    throw Error("log_softmax_pick: " + std::to_string(targets.size()) +
                " targets for " + std::to_string(lv.rows()) + " rows");
  }
  Matrix lsm = log_softmax_rows(lv);
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= lv.cols()) {
      throw Error("log_softmax_pick: target " + std::to_string(targets[r]) +
                  " outside vocabulary of " + std::to_string(lv.cols()));
    }
    total += lsm(r, targets[r]);
  }
  return logits.tape().push(
      Matrix(1, 1, total), logits.requires_grad(),
      [logits, targets = std::move(targets), lsm = std::move(lsm)](Tape& t, const Matrix& g) {
        Matrix& dl = t.grad(logits);
        const double gv = g(0, 0);
        for (std::size_t r = 0; r < lsm.rows(); ++r) {
          for (std::size_t c = 0; c < lsm.cols(); ++c) {
            const double onehot = c == targets[r] ? 1.0 : 0.0;
            dl(r, c) += gv * (onehot - std::exp(lsm(r, c)));
          }
        }
      });
}

}  // namespace ad
}  // namespace lgspf
