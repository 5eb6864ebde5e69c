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

#ifndef EVIREG_TAPE_HPP_
#define EVIREG_TAPE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "evireg/rng.hpp"
#include "evireg/tensor.hpp"

namespace evireg {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kConst,
  kParam,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kLog,
  kExp,
  kSoftplus,
  kRelu,
  kLgamma,
  kMatmul,
  kSum,
  kAbs,
  kDropoutMask,
};

struct Node {
  Op op;
  NodeId a = -1;
  NodeId b = -1;
  Tensor value;
  Tensor adjoint;
  Tensor mask;  // dropout only; recorded so replay and backward reuse it
};

// Reverse-mode computation graph. Nodes are appended in evaluation order, so
// inputs always reference earlier indices and one reverse sweep visits each
// node exactly once. Values are computed eagerly at node creation.
//
// Elementwise binary ops broadcast NumPy-style over 2-D shapes; the backward
// pass sum-reduces adjoints over broadcast dimensions.
class Tape {
 public:
  explicit Tape(std::uint64_t rng_seed = 0) : seed_(rng_seed), rng_(rng_seed) {}

  NodeId constant(Tensor v);
  NodeId scalar_const(double v) { return constant(Tensor::scalar(v)); }
  NodeId param(Tensor v);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId softplus(NodeId a);
  NodeId relu(NodeId a);
  NodeId lgamma(NodeId a);  // strictly positive arguments only
  NodeId matmul(NodeId a, NodeId b);
  NodeId sum(NodeId a);  // full reduction to 1x1
  NodeId abs(NodeId a);
  // Inverted dropout: elements kept with probability 1-rate are scaled by
  // 1/(1-rate); the sampled mask is recorded on the node.
  NodeId dropout(NodeId a, double rate);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  double scalar_value(NodeId id) const;
  const Tensor& adjoint(NodeId id) const { return nodes_[id].adjoint; }

  // Populates adjoints via the chain rule. `loss` must be scalar.
  // Returns the ids of all param nodes (the gradient map keys).
  std::vector<NodeId> backward(NodeId loss);

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t seed() const { return seed_; }

 private:
  NodeId push(Node n);
  Node& node(NodeId id) { return nodes_[id]; }

  std::uint64_t seed_;
  Rng rng_;
  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar function built from tape primitives. `build` constructs the
// graph from the flat coordinate vector (creating param nodes as it sees
// fit; their concatenated adjoints must cover every coordinate, in order).
// Every probe tape is created with the same seed so recorded dropout masks
// replay identically across the central-difference evaluations.
double gradcheck(
    const std::function<NodeId(Tape&, const std::vector<double>&)>& build,
    const std::vector<double>& point, double step, std::uint64_t tape_seed = 0);

}  // namespace evireg

#endif  // EVIREG_TAPE_HPP_
