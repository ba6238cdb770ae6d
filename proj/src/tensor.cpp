// SPDX-License-Identifier: Apache-2.0
#include "lgspf/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lgspf/kernels.hpp"

namespace lgspf {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols,
                   const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(what + ": expected " + std::to_string(rows) + "x" +
                std::to_string(cols) + ", got " + shape_string(m));
  }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error("matmul_nt: inner dimensions differ (" + shape_string(a) + " vs " +
                shape_string(b) + ")");
  }
  Matrix out(a.rows(), b.rows());
  kernels::active().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(),
                            b.data(), b.cols(), out.data(), out.cols());
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: inner dimensions differ (" + shape_string(a) + " vs " +
                shape_string(b) + ")");
  }
  Matrix out(a.rows(), b.cols());
  kernels::active().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(),
                            b.data(), b.cols(), out.data(), out.cols());
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  }
  return d;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace lgspf
