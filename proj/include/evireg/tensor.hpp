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

#ifndef EVIREG_TENSOR_HPP_
#define EVIREG_TENSOR_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace evireg {

// Dense row-major 2-D array of doubles. Scalars are 1x1, row vectors 1xN,
// column vectors Nx1. All training math is 64-bit.
struct Tensor {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::int64_t r, std::int64_t c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r * c), 0.0) {}
  Tensor(std::int64_t r, std::int64_t c, double fill)
      : rows(r), cols(c), data(static_cast<std::size_t>(r * c), fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }

  std::int64_t size() const { return rows * cols; }
  double& at(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * cols + j)]; }
  double at(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * cols + j)]; }
  double* row(std::int64_t i) { return data.data() + i * cols; }
  const double* row(std::int64_t i) const { return data.data() + i * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

// C = A * B
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C = A^T * B
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// Shape of a NumPy-style broadcast of two operands; throws ShapeError when
// a dimension neither matches nor is 1.
void broadcast_shape(const Tensor& a, const Tensor& b, std::int64_t& rows,
                     std::int64_t& cols, const char* opname);

// Elementwise op with broadcasting.
template <typename F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, F f, const char* opname) {
  std::int64_t r, c;
  broadcast_shape(a, b, r, c, opname);
  Tensor out(r, c);
  const std::int64_t ar = a.rows == 1 ? 0 : 1, ac = a.cols == 1 ? 0 : 1;
  const std::int64_t br = b.rows == 1 ? 0 : 1, bc = b.cols == 1 ? 0 : 1;
  for (std::int64_t i = 0; i < r; ++i) {
    const double* pa = a.row(i * ar);
    const double* pb = b.row(i * br);
    double* po = out.row(i);
    for (std::int64_t j = 0; j < c; ++j) po[j] = f(pa[j * ac], pb[j * bc]);
  }
  return out;
}

// Sum `t` down to `rows x cols` (each target dim equals t's or is 1).
// Inverse of broadcasting, used by backward passes.
Tensor reduce_to(const Tensor& t, std::int64_t rows, std::int64_t cols);

double sum_all(const Tensor& t);

}  // namespace evireg

#endif  // EVIREG_TENSOR_HPP_
