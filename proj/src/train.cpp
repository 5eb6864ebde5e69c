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

#include "evireg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "evireg/errors.hpp"
#include "evireg/nig.hpp"

namespace evireg {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
}

double cosine_lr(int epoch, const TrainConfig& config) {
  return 0.5 * config.lr * (1.0 + std::cos(kPi * epoch / config.epochs));
}

AdamWState make_adamw_state(const ParamSet& params) {
  AdamWState s;
  for (const Tensor& t : params.tensors) {
    s.m.emplace_back(t.rows, t.cols);
    s.v.emplace_back(t.rows, t.cols);
  }
  return s;
}

void adamw_step(ParamSet& params, const std::vector<Tensor>& grads,
                AdamWState& state, double lr, double weight_decay) {
  if (grads.size() != params.tensors.size()) {
    throw ShapeError("adamw: got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.tensors.size()) + " parameters");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& p = params.tensors[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) {
      throw ShapeError("adamw: gradient " + params.names[i] + " has shape " +
                       g.shape_str() + ", parameter is " + p.shape_str());
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    // decoupled decay, independent of the gradient step
    if (weight_decay > 0.0 && params.decay[i]) {
      const double shrink = 1.0 - lr * weight_decay;
      for (double& w : p.data) w *= shrink;
    }
    for (std::int64_t j = 0; j < p.size(); ++j) {
      const double gj = g.data[j];
      if (std::isnan(gj)) {
        throw ContractError("adamw: NaN gradient for parameter " + params.names[i]);
      }
      m.data[j] = kBeta1 * m.data[j] + (1.0 - kBeta1) * gj;
      v.data[j] = kBeta2 * v.data[j] + (1.0 - kBeta2) * gj * gj;
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

NodeId build_training_loss(Tape& t, const ModelConfig& config, NodeId head,
                           const Tensor& head_value, const TrainMatrix& data,
                           const std::vector<std::int64_t>& rows, double lambda) {
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  const NodeId inv_n = t.scalar_const(1.0 / static_cast<double>(n));

  switch (config.kind) {
    case ModelKind::kEvidential: {
      // Column selectors: (Bx4)(4x1) one-hot products.
      auto select = [&](int col) {
        Tensor sel(4, 1);
        sel.data[static_cast<std::size_t>(col)] = 1.0;
        return t.matmul(head, t.constant(std::move(sel)));
      };
      const NodeId gamma = select(0);
      const NodeId floor_c = t.scalar_const(kHeadFloor);
      const NodeId nu = t.add(t.softplus(select(1)), floor_c);
      const NodeId alpha = t.add(t.softplus(select(2)), t.scalar_const(1.0 + kHeadFloor));
      const NodeId beta = t.add(t.softplus(select(3)), floor_c);
      Tensor y(n, 1);
      for (std::int64_t i = 0; i < n; ++i) y.data[i] = data.target_norm[rows[i]];
      const NodeId losses =
          build_evidential_loss(t, gamma, nu, alpha, beta, t.constant(std::move(y)), lambda);
      return t.mul(t.sum(losses), inv_n);
    }
    case ModelKind::kPoint: {
      Tensor y(n, 1);
      for (std::int64_t i = 0; i < n; ++i) y.data[i] = data.target_norm[rows[i]];
      const NodeId resid = t.sub(head, t.constant(std::move(y)));
      return t.mul(t.sum(t.mul(resid, resid)), inv_n);
    }
    case ModelKind::kClassifier: {
      const std::int64_t k = head_value.cols;
      // Row-max shift as a constant: logsumexp(z) = c + logsumexp(z - c)
      // holds for any c, and treating c as constant leaves the gradient
      // (softmax - onehot) unchanged.
      Tensor shift(n, 1);
      Tensor onehot(n, k);
      for (std::int64_t i = 0; i < n; ++i) {
        double mx = head_value.at(i, 0);
        for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, head_value.at(i, j));
        shift.data[i] = mx;
        onehot.at(i, data.class_index[rows[i]]) = 1.0;
      }
      const NodeId z = t.sub(head, t.constant(std::move(shift)));
      Tensor ones(k, 1, 1.0);
      const NodeId lse = t.log(t.matmul(t.exp(z), t.constant(std::move(ones))));
      Tensor ones2(k, 1, 1.0);
      const NodeId picked = t.matmul(t.mul(z, t.constant(std::move(onehot))),
                                     t.constant(std::move(ones2)));
      return t.mul(t.sum(t.sub(lse, picked)), inv_n);
    }
  }
  throw ContractError("build_training_loss: unknown model kind");
}

void augment_input_row(double* row, int side, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    for (int y = 0; y < side; ++y) {
      double* r = row + static_cast<std::size_t>(y) * side;
      std::reverse(r, r + side);
    }
  }
  const double angle = rng.uniform(-0.05, 0.05);  // radians, ~3 degrees
  if (std::fabs(angle) < 1e-3) return;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double cx = 0.5 * (side - 1), cy = 0.5 * (side - 1);
  std::vector<double> src(row, row + static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + ca * dx + sa * dy;
      const double sy = cy - sa * dx + ca * dy;
      double v;
      if (sx < 0 || sy < 0 || sx > side - 1 || sy > side - 1) {
        v = src[static_cast<std::size_t>(y) * side + x];  // keep border pixels
      } else {
        const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
        const int x1 = std::min(x0 + 1, side - 1), y1 = std::min(y0 + 1, side - 1);
        const double fx = sx - x0, fy = sy - y0;
        const double a = src[static_cast<std::size_t>(y0) * side + x0];
        const double b = src[static_cast<std::size_t>(y0) * side + x1];
        const double c = src[static_cast<std::size_t>(y1) * side + x0];
        const double d = src[static_cast<std::size_t>(y1) * side + x1];
        v = (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
      }
      row[static_cast<std::size_t>(y) * side + x] = v;
    }
  }
}

namespace {

struct ValMetrics {
  double mae_years = 0.0;
  double picp = 0.0;
  bool has_picp = false;
};

ValMetrics validate(const Model& model, const TrainMatrix& val) {
  ValMetrics out;
  const YearScale scale;
  const std::int64_t n = val.size();
  double abs_err = 0.0;
  switch (model.config().kind) {
    case ModelKind::kEvidential: {
      const std::vector<NIGParams> ps = model.infer_nig(val.inputs);
      int covered = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double pred = scale.denormalize(ps[i].gamma);
        abs_err += std::fabs(pred - val.true_years[i]);
        auto [lo, hi] = predictive_interval(ps[i], 0.9);
        const double y = scale.normalize(val.true_years[i]);
        if (y >= lo && y <= hi) ++covered;
      }
      out.picp = static_cast<double>(covered) / static_cast<double>(n);
      out.has_picp = true;
      break;
    }
    case ModelKind::kPoint: {
      const std::vector<double> preds = model.infer_point(val.inputs);
      for (std::int64_t i = 0; i < n; ++i) {
        abs_err += std::fabs(scale.denormalize(preds[i]) - val.true_years[i]);
      }
      break;
    }
    case ModelKind::kClassifier: {
      const std::vector<double> years = model.logits_to_years(model.infer_logits(val.inputs));
      for (std::int64_t i = 0; i < n; ++i) {
        abs_err += std::fabs(years[i] - val.true_years[i]);
      }
      break;
    }
  }
  out.mae_years = abs_err / static_cast<double>(n);
  return out;
}

}  // namespace

TrainResult train(const TrainMatrix& train_set, const TrainMatrix& val_set,
                  const ModelConfig& model_config, const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw ConfigError("train: empty training partition");
  if (val_set.size() == 0) throw ConfigError("train: empty validation partition");

  const Rng master(config.seed);
  TrainResult result{Model(model_config, config.seed), {}};
  if (config.epochs == 0) return result;

  Model& model = result.model;
  AdamWState opt = make_adamw_state(model.params());
  const int side = model_config.extractor.input_side;

  ParamSet best_params = model.params();
  double best_mae = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<std::int64_t> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config);
    Rng shuffle_rng = master.derive("shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng aug_rng = master.derive("augment", static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    std::int64_t seen = 0;
    const std::int64_t n = train_set.size();
    std::int64_t batch_index = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::int64_t stop = std::min<std::int64_t>(start + config.batch_size, n);
      const std::int64_t bs = stop - start;
      std::vector<std::int64_t> rows(order.begin() + start, order.begin() + stop);

      Tensor batch(bs, train_set.inputs.cols);
      for (std::int64_t i = 0; i < bs; ++i) {
        const double* src = train_set.inputs.row(rows[i]);
        std::copy(src, src + train_set.inputs.cols, batch.row(i));
        if (config.augment) augment_input_row(batch.row(i), side, aug_rng);
      }

      const std::uint64_t tape_seed =
          master.derive("dropout", static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                       static_cast<std::uint64_t>(batch_index))
              .next_u64();
      Tape tape(tape_seed);
      ForwardNodes f = model.build_forward(tape, batch, Mode::kTrain);
      const NodeId loss = build_training_loss(tape, model_config, f.head,
                                              tape.value(f.head), train_set, rows,
                                              config.lambda);
      loss_sum += tape.scalar_value(loss) * static_cast<double>(bs);
      seen += bs;
      tape.backward(loss);

      std::vector<Tensor> grads;
      grads.reserve(f.params.size());
      for (NodeId pid : f.params) {
        const Tensor& adj = tape.adjoint(pid);
        if (adj.size() == 0) {
          const Tensor& val = tape.value(pid);
          grads.emplace_back(val.rows, val.cols);
        } else {
          grads.push_back(adj);
        }
      }
      adamw_step(model.params(), grads, opt, lr, config.weight_decay);
    }

    const ValMetrics vm = validate(model, val_set);
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = loss_sum / static_cast<double>(seen);
    st.val_mae_years = vm.mae_years;
    st.val_picp = vm.picp;
    st.has_picp = vm.has_picp;
    result.history.push_back(st);

    if (vm.mae_years < best_mae) {
      best_mae = vm.mae_years;
      best_params = model.params();
      best_epoch = epoch;
    }
  }

  model.params() = best_params;
  model.epoch = best_epoch;
  return result;
}

std::vector<double> distinct_labels(const Corpus& corpus) {
  std::vector<double> labels;
  for (const Page& p : corpus.pages) {
    if (std::find(labels.begin(), labels.end(), p.label_year) == labels.end()) {
      labels.push_back(p.label_year);
    }
  }
  std::sort(labels.begin(), labels.end());
  return labels;
}

TrainMatrix make_train_matrix(const Corpus& corpus, Split split,
                              const ModelConfig& config) {
  const YearScale scale;
  const int psz = corpus.config.patch_size;
  const int side = config.extractor.input_side;

  std::vector<const PatchRef*> refs;
  for (const PatchRef& ref : corpus.patches) {
    if (corpus.page_split[static_cast<std::size_t>(ref.page_index)] == split) {
      refs.push_back(&ref);
    }
  }

  TrainMatrix m;
  m.inputs = Tensor(static_cast<std::int64_t>(refs.size()),
                    static_cast<std::int64_t>(side) * side);
  m.target_norm.reserve(refs.size());
  m.true_years.reserve(refs.size());
  m.class_index.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const PatchRef& ref = *refs[i];
    const Page& page = corpus.pages[static_cast<std::size_t>(ref.page_index)];
    const std::vector<std::uint8_t> px = extract_patch(page, ref.row, ref.col, psz);
    const Tensor row = downsample_patch(px.data(), psz, side);
    std::copy(row.data.begin(), row.data.end(), m.inputs.row(static_cast<std::int64_t>(i)));
    m.target_norm.push_back(scale.normalize(page.label_year));
    m.true_years.push_back(page.true_year);
    if (config.kind == ModelKind::kClassifier) {
      const auto it = std::find(config.class_labels.begin(), config.class_labels.end(),
                                page.label_year);
      if (it == config.class_labels.end()) {
        throw ConfigError("classifier buckets do not include label year " +
                          std::to_string(page.label_year));
      }
      m.class_index.push_back(static_cast<int>(it - config.class_labels.begin()));
    } else {
      m.class_index.push_back(0);
    }
  }
  return m;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open history csv for writing: " + path);
  out << "epoch,lr,train-loss,val-mae-years,val-picp\n";
  char buf[256];
  for (const EpochStats& s : history) {
    if (s.has_picp) {
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n", s.epoch, s.lr,
                    s.train_loss, s.val_mae_years, s.val_picp);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,\n", s.epoch, s.lr,
                    s.train_loss, s.val_mae_years);
    }
    out << buf;
  }
}

}  // namespace evireg
