/*
 * Copyright 2026 The evireg authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "evireg/tensor.hpp"

#include "evireg/errors.hpp"

namespace evireg {

// ikj order: the j loop runs over contiguous memory in B and C so the
// compiler vectorizes it. These GEMMs dominate training time.
Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions disagree, lhs " + a.shape_str() +
                     " rhs " + b.shape_str());
  }
  Tensor c(a.rows, b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::int64_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::int64_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols, a.rows);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// A * B^T via an explicit transpose; the copy is O(mn), the product O(Bmn).
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols) {
    throw ShapeError("matmul_nt: inner dimensions disagree, lhs " + a.shape_str() +
                     " rhs^T [" + std::to_string(b.cols) + "x" + std::to_string(b.rows) + "]");
  }
  return matmul(a, transpose(b));
}

// A^T * B: accumulate rank-1 updates row by row, contiguous inner loop.
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows) {
    throw ShapeError("matmul_tn: inner dimensions disagree, lhs^T [" +
                     std::to_string(a.cols) + "x" + std::to_string(a.rows) + "] rhs " +
                     b.shape_str());
  }
  Tensor c(a.cols, b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    for (std::int64_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      double* crow = c.row(k);
      for (std::int64_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

void broadcast_shape(const Tensor& a, const Tensor& b, std::int64_t& rows,
                     std::int64_t& cols, const char* opname) {
  const bool rows_ok = a.rows == b.rows || a.rows == 1 || b.rows == 1;
  const bool cols_ok = a.cols == b.cols || a.cols == 1 || b.cols == 1;
  if (!rows_ok || !cols_ok) {
    throw ShapeError(std::string(opname) + ": shapes not broadcastable, lhs " +
                     a.shape_str() + " rhs " + b.shape_str());
  }
  rows = a.rows == 1 ? b.rows : a.rows;
  cols = a.cols == 1 ? b.cols : a.cols;
}

Tensor reduce_to(const Tensor& t, std::int64_t rows, std::int64_t cols) {
  if (t.rows == rows && t.cols == cols) return t;
  if ((rows != t.rows && rows != 1) || (cols != t.cols && cols != 1)) {
    throw ShapeError("reduce_to: cannot reduce " + t.shape_str() + " to [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Tensor out(rows, cols);
  for (std::int64_t i = 0; i < t.rows; ++i) {
    const double* src = t.row(i);
    double* dst = out.row(rows == 1 ? 0 : i);
    if (cols == 1) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < t.cols; ++j) acc += src[j];
      dst[0] += acc;
    } else {
      for (std::int64_t j = 0; j < t.cols; ++j) dst[j] += src[j];
    }
  }
  return out;
}

double sum_all(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data) acc += v;
  return acc;
}

}  // namespace evireg
