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

#include "evireg/model.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "evireg/errors.hpp"
#include "evireg/rng.hpp"
#include "evireg/special.hpp"

#include "json.hpp"

namespace evireg {

void ExtractorConfig::validate() const {
  if (input_side < 1) throw ConfigError("extractor: input_side must be >= 1");
  if (feature_dim < 1) throw ConfigError("extractor: feature_dim must be >= 1");
  for (int w : hidden_widths) {
    if (w < 1) throw ConfigError("extractor: hidden widths must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("extractor: dropout_rate must lie in [0,1)");
  }
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kEvidential: return "evidential";
    case ModelKind::kPoint: return "point";
    case ModelKind::kClassifier: return "classifier";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "evidential") return ModelKind::kEvidential;
  if (s == "point") return ModelKind::kPoint;
  if (s == "classifier") return ModelKind::kClassifier;
  throw ConfigError("unknown model kind: " + s);
}

int ModelConfig::head_dim() const {
  switch (kind) {
    case ModelKind::kEvidential: return 4;
    case ModelKind::kPoint: return 1;
    case ModelKind::kClassifier: return static_cast<int>(class_labels.size());
  }
  return 0;
}

void ModelConfig::validate() const {
  extractor.validate();
  if (kind == ModelKind::kClassifier && class_labels.size() < 2) {
    throw ConfigError("classifier requires at least 2 century buckets, got " +
                      std::to_string(class_labels.size()));
  }
}

std::size_t ParamSet::count_scalars() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  Rng rng = Rng(seed).derive("init");

  std::vector<int> dims;
  dims.push_back(config_.extractor.input_dim());
  for (int w : config_.extractor.hidden_widths) dims.push_back(w);
  dims.push_back(config_.extractor.feature_dim);
  dims.push_back(config_.head_dim());

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    Tensor w(fan_in, fan_out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    Tensor b(1, fan_out);  // zero biases; evidential head then starts at
                           // nu ~ ln2, alpha ~ 1.7, beta ~ ln2
    const bool is_head = l + 2 == dims.size();
    std::string base = is_head ? "head" : "fc" + std::to_string(l);
    params_.names.push_back(base + ".weight");
    params_.tensors.push_back(std::move(w));
    params_.decay.push_back(true);
    params_.names.push_back(base + ".bias");
    params_.tensors.push_back(std::move(b));
    params_.decay.push_back(!(is_head && config_.kind == ModelKind::kEvidential));
  }
}

ForwardNodes Model::build_forward(Tape& tape, const Tensor& inputs, Mode mode) const {
  if (inputs.cols != config_.extractor.input_dim()) {
    throw ShapeError("model: input has " + std::to_string(inputs.cols) +
                     " pixels per row, extractor expects " +
                     std::to_string(config_.extractor.input_dim()));
  }
  ForwardNodes out;
  NodeId x = tape.constant(inputs);
  // Center the [0,1] pixels to [-1,1]; all-positive inputs condition the
  // first layer poorly.
  x = tape.mul(tape.sub(x, tape.scalar_const(0.5)), tape.scalar_const(2.0));
  const std::size_t n_layers = params_.tensors.size() / 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    NodeId w = tape.param(params_.tensors[2 * l]);
    NodeId b = tape.param(params_.tensors[2 * l + 1]);
    out.params.push_back(w);
    out.params.push_back(b);
    x = tape.add(tape.matmul(x, w), b);
    const bool is_head = l + 1 == n_layers;
    if (!is_head) {
      x = tape.relu(x);
      const bool is_feature_layer = l + 2 == n_layers;
      if (is_feature_layer) {
        out.features = x;
      } else if (mode == Mode::kTrain && config_.extractor.dropout_rate > 0.0) {
        x = tape.dropout(x, config_.extractor.dropout_rate);
      }
    }
  }
  out.head = x;
  return out;
}

Tensor Model::features_eval(const Tensor& inputs) const {
  Tape tape(0);
  ForwardNodes f = build_forward(tape, inputs, Mode::kEval);
  return tape.value(f.features);
}

NIGParams Model::head_activation(double raw_gamma, double raw_nu,
                                 double raw_alpha, double raw_beta) {
  return NIGParams(raw_gamma, softplus(raw_nu) + kHeadFloor,
                   softplus(raw_alpha) + 1.0 + kHeadFloor,
                   softplus(raw_beta) + kHeadFloor);
}

std::vector<NIGParams> Model::infer_nig(const Tensor& inputs) const {
  if (config_.kind != ModelKind::kEvidential) {
    throw ContractError("infer_nig requires an evidential model");
  }
  Tape tape(0);
  ForwardNodes f = build_forward(tape, inputs, Mode::kEval);
  const Tensor& raw = tape.value(f.head);
  std::vector<NIGParams> out;
  out.reserve(static_cast<std::size_t>(raw.rows));
  for (std::int64_t i = 0; i < raw.rows; ++i) {
    out.push_back(head_activation(raw.at(i, 0), raw.at(i, 1), raw.at(i, 2), raw.at(i, 3)));
  }
  return out;
}

std::vector<double> Model::infer_point(const Tensor& inputs) const {
  Tape tape(0);
  ForwardNodes f = build_forward(tape, inputs, Mode::kEval);
  const Tensor& v = tape.value(f.head);
  std::vector<double> out(v.data.begin(), v.data.end());
  if (config_.kind == ModelKind::kEvidential) {
    // gamma column is the point prediction
    out.clear();
    for (std::int64_t i = 0; i < v.rows; ++i) out.push_back(v.at(i, 0));
  }
  return out;
}

std::vector<double> Model::infer_point_stochastic(const Tensor& inputs,
                                                  std::uint64_t mask_seed) const {
  Tape tape(mask_seed);
  ForwardNodes f = build_forward(tape, inputs, Mode::kTrain);
  const Tensor& v = tape.value(f.head);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(v.rows));
  for (std::int64_t i = 0; i < v.rows; ++i) out.push_back(v.at(i, 0));
  return out;
}

Tensor Model::infer_logits(const Tensor& inputs) const {
  if (config_.kind != ModelKind::kClassifier) {
    throw ContractError("infer_logits requires a classifier model");
  }
  Tape tape(0);
  ForwardNodes f = build_forward(tape, inputs, Mode::kEval);
  return tape.value(f.head);
}

std::vector<double> Model::logits_to_years(const Tensor& logits) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(logits.rows));
  for (std::int64_t i = 0; i < logits.rows; ++i) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < logits.cols; ++k) {
      if (logits.at(i, k) > logits.at(i, best)) best = k;
    }
    out.push_back(config_.class_labels[static_cast<std::size_t>(best)]);
  }
  return out;
}

Tensor downsample_patch(const std::uint8_t* pixels, int size, int side) {
  // Sample a small window at each grid-cell center rather than averaging
  // the whole cell: a full box average is invariant to any mean-preserving
  // local transform, which would hide blur and compression artifacts from
  // the model entirely.
  Tensor row(1, static_cast<std::int64_t>(side) * side);
  const double step = static_cast<double>(size) / side;
  const int win = std::max(1, static_cast<int>(step * 0.75));
  for (int oy = 0; oy < side; ++oy) {
    const int cy = static_cast<int>((oy + 0.5) * step);
    const int y0 = std::max(0, cy - win / 2);
    const int y1 = std::min(size, y0 + win);
    for (int ox = 0; ox < side; ++ox) {
      const int cx = static_cast<int>((ox + 0.5) * step);
      const int x0 = std::max(0, cx - win / 2);
      const int x1 = std::min(size, x0 + win);
      double acc = 0.0;
      for (int y = y0; y < y1; ++y) {
        const std::uint8_t* p = pixels + static_cast<std::size_t>(y) * size;
        for (int x = x0; x < x1; ++x) acc += p[x];
      }
      const double area = static_cast<double>(y1 - y0) * (x1 - x0);
      row.data[static_cast<std::size_t>(oy) * side + ox] = acc / (area * 255.0);
    }
  }
  return row;
}

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["kind"] = to_string(c.kind);
  j["input_side"] = c.extractor.input_side;
  j["hidden_widths"] = c.extractor.hidden_widths;
  j["dropout_rate"] = c.extractor.dropout_rate;
  j["feature_dim"] = c.extractor.feature_dim;
  j["class_labels"] = c.class_labels;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = model_kind_from_string(j.at("kind").get<std::string>());
  c.extractor.input_side = j.at("input_side").get<int>();
  c.extractor.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  c.extractor.dropout_rate = j.at("dropout_rate").get<double>();
  c.extractor.feature_dim = j.at("feature_dim").get<int>();
  c.class_labels = j.at("class_labels").get<std::vector<double>>();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out << "evireg-checkpoint v1\n";
  out << "config " << config_to_json(model.config()).dump() << "\n";
  out << "seed " << model.seed() << "\n";
  out << "epoch " << model.epoch << "\n";
  const ParamSet& p = model.params();
  char buf[48];
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const Tensor& t = p.tensors[i];
    out << "tensor " << p.names[i] << " " << t.rows << " " << t.cols << "\n";
    for (std::int64_t r = 0; r < t.rows; ++r) {
      const double* row = t.row(r);
      for (std::int64_t c = 0; c < t.cols; ++c) {
        // hex float: bit-exact round trip
        std::snprintf(buf, sizeof buf, "%a", row[c]);
        out << buf << (c + 1 == t.cols ? "" : " ");
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw ConfigError("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "evireg-checkpoint v1") {
    throw ConfigError("not an evireg checkpoint: " + path);
  }
  std::getline(in, line);
  if (line.rfind("config ", 0) != 0) throw ConfigError("checkpoint missing config line");
  const ModelConfig config = config_from_json(nlohmann::json::parse(line.substr(7)));

  std::uint64_t seed = 0;
  int epoch = 0;
  in >> line >> seed;  // "seed"
  in >> line >> epoch;
  std::getline(in, line);

  Model model(config, seed);
  model.epoch = epoch;
  ParamSet& p = model.params();
  std::size_t next = 0;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream head(line);
    std::string tag, name;
    std::int64_t rows = 0, cols = 0;
    head >> tag >> name >> rows >> cols;
    if (tag != "tensor" || next >= p.tensors.size() || name != p.names[next]) {
      throw ConfigError("checkpoint tensor mismatch at '" + line + "'");
    }
    Tensor& t = p.tensors[next];
    if (t.rows != rows || t.cols != cols) {
      throw ShapeError("checkpoint tensor " + name + " has shape [" +
                       std::to_string(rows) + "x" + std::to_string(cols) +
                       "], model expects " + t.shape_str());
    }
    for (std::int64_t i = 0; i < t.size(); ++i) {
      std::string tok;
      in >> tok;
      t.data[static_cast<std::size_t>(i)] = std::strtod(tok.c_str(), nullptr);
    }
    std::getline(in, line);  // consume end of row line
    ++next;
  }
  if (next != p.tensors.size()) {
    throw ConfigError("checkpoint ended early: " + path);
  }
  return model;
}

}  // namespace evireg
