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

#ifndef EVIREG_MODEL_HPP_
#define EVIREG_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "evireg/nig.hpp"
#include "evireg/tape.hpp"

namespace evireg {

// Downsample -> MLP feature extractor. Patches enter as input_side x
// input_side grayscale in [0,1], flattened row-major.
struct ExtractorConfig {
  int input_side = 32;
  std::vector<int> hidden_widths = {256, 256};
  double dropout_rate = 0.3;
  int feature_dim = 64;

  int input_dim() const { return input_side * input_side; }
  void validate() const;
};

enum class ModelKind { kEvidential, kPoint, kClassifier };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  ExtractorConfig extractor;
  ModelKind kind = ModelKind::kEvidential;
  // Classifier bucket labels in years CE (century midpoints), ascending.
  std::vector<double> class_labels;

  int head_dim() const;
  void validate() const;
};

// Named parameter tensors plus their weight-decay eligibility. The four
// evidential-head bias channels are excluded from decay so the head can
// hold evidence levels that gradients ask for.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::vector<bool> decay;

  std::size_t count_scalars() const;
};

enum class Mode { kTrain, kEval };

// Nodes of one forward build: param ids line up with ParamSet order.
struct ForwardNodes {
  std::vector<NodeId> params;
  NodeId features;
  NodeId head;  // Bx4 NIG raw / Bx1 point / BxK logits
};

class Model {
 public:
  Model() = default;
  // Fan-in uniform weight init, zero biases.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t param_count() const { return params_.count_scalars(); }

  // Builds the extractor and head onto `tape`. In train mode dropout masks
  // are drawn from the tape's recorded rng stream; eval mode is
  // deterministic.
  ForwardNodes build_forward(Tape& tape, const Tensor& inputs, Mode mode) const;

  // Eval-mode inference helpers (deterministic).
  Tensor features_eval(const Tensor& inputs) const;  // B x feature_dim
  std::vector<NIGParams> infer_nig(const Tensor& inputs) const;
  std::vector<double> infer_point(const Tensor& inputs) const;  // normalized years
  Tensor infer_logits(const Tensor& inputs) const;
  // Single stochastic forward with dropout active (one MC-dropout pass per
  // row when the batch holds repeated copies of one patch).
  std::vector<double> infer_point_stochastic(const Tensor& inputs,
                                             std::uint64_t mask_seed) const;

  // Evidential head on raw Bx4 activations: gamma identity, nu/alpha/beta
  // through softplus with additive floor 1e-6 (alpha offset by 1).
  static NIGParams head_activation(double raw_gamma, double raw_nu,
                                   double raw_alpha, double raw_beta);

  // Classifier helper: label years of the argmax bucket per row.
  std::vector<double> logits_to_years(const Tensor& logits) const;

  int epoch = 0;  // epoch the weights were taken from (checkpoint metadata)

 private:
  ModelConfig config_;
  ParamSet params_;
  std::uint64_t seed_ = 0;
};

// Box-average downsample of a size x size grayscale byte patch to the
// extractor input grid, scaled to [0,1]. Returned as a 1 x side^2 row.
Tensor downsample_patch(const std::uint8_t* pixels, int size, int side);

// Portable text checkpoint: config echo, seed, epoch, weight tensors with
// declared shapes. Doubles are serialized as hex floats so a round trip is
// bit-exact.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

constexpr double kHeadFloor = 1e-6;

}  // namespace evireg

#endif  // EVIREG_MODEL_HPP_
