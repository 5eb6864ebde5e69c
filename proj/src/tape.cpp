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

#include "evireg/tape.hpp"

#include <cmath>
#include <string>

#include "evireg/errors.hpp"
#include "evireg/special.hpp"

namespace evireg {

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::param(Tensor v) {
  Node n;
  n.op = Op::kParam;
  n.value = std::move(v);
  NodeId id = push(std::move(n));
  params_.push_back(id);
  return id;
}

namespace {

template <typename F>
Node binary_node(Op op, NodeId a, NodeId b, const Tensor& va, const Tensor& vb,
                 F f, const char* name) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.value = broadcast_apply(va, vb, f, name);
  return n;
}

template <typename F>
Node unary_node(Op op, NodeId a, const Tensor& va, F f) {
  Node n;
  n.op = op;
  n.a = a;
  n.value = va;
  for (double& v : n.value.data) v = f(v);
  return n;
}

}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  return push(binary_node(Op::kAdd, a, b, value(a), value(b),
                          [](double x, double y) { return x + y; }, "add"));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  return push(binary_node(Op::kSub, a, b, value(a), value(b),
                          [](double x, double y) { return x - y; }, "sub"));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  return push(binary_node(Op::kMul, a, b, value(a), value(b),
                          [](double x, double y) { return x * y; }, "mul"));
}

NodeId Tape::div(NodeId a, NodeId b) {
  return push(binary_node(Op::kDiv, a, b, value(a), value(b),
                          [](double x, double y) { return x / y; }, "div"));
}

NodeId Tape::neg(NodeId a) {
  return push(unary_node(Op::kNeg, a, value(a), [](double x) { return -x; }));
}

NodeId Tape::log(NodeId a) {
  return push(unary_node(Op::kLog, a, value(a), [](double x) { return std::log(x); }));
}

NodeId Tape::exp(NodeId a) {
  return push(unary_node(Op::kExp, a, value(a), [](double x) { return std::exp(x); }));
}

NodeId Tape::softplus(NodeId a) {
  return push(unary_node(Op::kSoftplus, a, value(a),
                         [](double x) { return evireg::softplus(x); }));
}

NodeId Tape::relu(NodeId a) {
  return push(unary_node(Op::kRelu, a, value(a),
                         [](double x) { return x > 0.0 ? x : 0.0; }));
}

NodeId Tape::lgamma(NodeId a) {
  return push(unary_node(Op::kLgamma, a, value(a),
                         [](double x) { return lgamma_pos(x); }));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = evireg::matmul(value(a), value(b));
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.value = Tensor::scalar(sum_all(value(a)));
  return push(std::move(n));
}

NodeId Tape::abs(NodeId a) {
  return push(unary_node(Op::kAbs, a, value(a), [](double x) { return std::fabs(x); }));
}

NodeId Tape::dropout(NodeId a, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  Node n;
  n.op = Op::kDropoutMask;
  n.a = a;
  const Tensor& in = value(a);
  n.mask = Tensor(in.rows, in.cols);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (double& m : n.mask.data) m = rate == 0.0 ? 1.0 : (rng_.uniform() < keep ? scale : 0.0);
  n.value = in;
  for (std::int64_t i = 0; i < in.size(); ++i) n.value.data[i] *= n.mask.data[i];
  return push(std::move(n));
}

double Tape::scalar_value(NodeId id) const {
  const Tensor& v = value(id);
  if (!v.is_scalar()) {
    throw ContractError("scalar_value: node value has shape " + v.shape_str());
  }
  return v.data[0];
}

namespace {

void accumulate(Tensor& dst, const Tensor& delta) {
  if (dst.size() == 0) {
    dst = delta;
    return;
  }
  for (std::int64_t i = 0; i < dst.size(); ++i) dst.data[i] += delta.data[i];
}

}  // namespace

std::vector<NodeId> Tape::backward(NodeId loss) {
  const Tensor& lv = value(loss);
  if (!lv.is_scalar()) {
    throw ContractError("backward: loss node must be scalar, got " + lv.shape_str());
  }
  for (Node& n : nodes_) n.adjoint = Tensor();
  nodes_[loss].adjoint = Tensor::scalar(1.0);

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.adjoint.size() == 0) continue;  // not on a path to the loss
    const Tensor& g = n.adjoint;
    switch (n.op) {
      case Op::kConst:
      case Op::kParam:
        break;
      case Op::kAdd: {
        const Tensor& va = nodes_[n.a].value;
        const Tensor& vb = nodes_[n.b].value;
        accumulate(nodes_[n.a].adjoint, reduce_to(g, va.rows, va.cols));
        accumulate(nodes_[n.b].adjoint, reduce_to(g, vb.rows, vb.cols));
        break;
      }
      case Op::kSub: {
        const Tensor& va = nodes_[n.a].value;
        const Tensor& vb = nodes_[n.b].value;
        accumulate(nodes_[n.a].adjoint, reduce_to(g, va.rows, va.cols));
        Tensor neg_g = g;
        for (double& v : neg_g.data) v = -v;
        accumulate(nodes_[n.b].adjoint, reduce_to(neg_g, vb.rows, vb.cols));
        break;
      }
      case Op::kMul: {
        const Tensor& va = nodes_[n.a].value;
        const Tensor& vb = nodes_[n.b].value;
        Tensor da = broadcast_apply(g, vb, [](double x, double y) { return x * y; }, "mul_bwd");
        Tensor db = broadcast_apply(g, va, [](double x, double y) { return x * y; }, "mul_bwd");
        accumulate(nodes_[n.a].adjoint, reduce_to(da, va.rows, va.cols));
        accumulate(nodes_[n.b].adjoint, reduce_to(db, vb.rows, vb.cols));
        break;
      }
      case Op::kDiv: {
        const Tensor& va = nodes_[n.a].value;
        const Tensor& vb = nodes_[n.b].value;
        Tensor da = broadcast_apply(g, vb, [](double x, double y) { return x / y; }, "div_bwd");
        // d/db (a/b) = -a / b^2
        Tensor ratio = broadcast_apply(va, vb, [](double x, double y) { return -x / (y * y); }, "div_bwd");
        Tensor db = broadcast_apply(g, ratio, [](double x, double y) { return x * y; }, "div_bwd");
        accumulate(nodes_[n.a].adjoint, reduce_to(da, va.rows, va.cols));
        accumulate(nodes_[n.b].adjoint, reduce_to(db, vb.rows, vb.cols));
        break;
      }
      case Op::kNeg: {
        Tensor da = g;
        for (double& v : da.data) v = -v;
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kLog: {
        const Tensor& va = nodes_[n.a].value;
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] /= va.data[i];
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kExp: {
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= n.value.data[i];
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kSoftplus: {
        const Tensor& va = nodes_[n.a].value;
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= sigmoid(va.data[i]);
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kRelu: {
        const Tensor& va = nodes_[n.a].value;
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= va.data[i] > 0.0 ? 1.0 : 0.0;
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kLgamma: {
        const Tensor& va = nodes_[n.a].value;
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= digamma(va.data[i]);
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kMatmul: {
        const Tensor& va = nodes_[n.a].value;
        const Tensor& vb = nodes_[n.b].value;
        accumulate(nodes_[n.a].adjoint, matmul_nt(g, vb));
        accumulate(nodes_[n.b].adjoint, matmul_tn(va, g));
        break;
      }
      case Op::kSum: {
        const Tensor& va = nodes_[n.a].value;
        accumulate(nodes_[n.a].adjoint, Tensor(va.rows, va.cols, g.data[0]));
        break;
      }
      case Op::kAbs: {
        const Tensor& va = nodes_[n.a].value;
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) {
          const double x = va.data[i];
          da.data[i] *= x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        }
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
      case Op::kDropoutMask: {
        Tensor da = g;
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= n.mask.data[i];
        accumulate(nodes_[n.a].adjoint, da);
        break;
      }
    }
  }
  return params_;
}

double gradcheck(
    const std::function<NodeId(Tape&, const std::vector<double>&)>& build,
    const std::vector<double>& point, double step, std::uint64_t tape_seed) {
  if (!(step > 0.0)) throw DomainError("gradcheck: step must be positive");
  const std::size_t n = point.size();

  auto eval = [&](const std::vector<double>& x) {
    Tape tape(tape_seed);
    NodeId loss = build(tape, x);
    return tape.scalar_value(loss);
  };

  // Analytic gradient: adjoints of all param nodes, concatenated.
  Tape tape(tape_seed);
  NodeId loss = build(tape, point);
  const std::vector<NodeId> params = tape.backward(loss);
  std::vector<double> analytic;
  analytic.reserve(n);
  for (NodeId pid : params) {
    const Tensor& adj = tape.adjoint(pid);
    if (adj.size() > 0) {
      analytic.insert(analytic.end(), adj.data.begin(), adj.data.end());
    } else {
      const Tensor& val = tape.value(pid);
      analytic.insert(analytic.end(), static_cast<std::size_t>(val.size()), 0.0);
    }
  }
  if (analytic.size() != n) {
    throw ContractError("gradcheck: param nodes cover " +
                        std::to_string(analytic.size()) + " coordinates, point has " +
                        std::to_string(n));
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> hi = point, lo = point;
    hi[i] += step;
    lo[i] -= step;
    const double fd = (eval(hi) - eval(lo)) / (2.0 * step);
    const double rel =
        std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace evireg
