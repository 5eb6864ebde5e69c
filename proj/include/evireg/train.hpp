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

#ifndef EVIREG_TRAIN_HPP_
#define EVIREG_TRAIN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "evireg/data.hpp"
#include "evireg/model.hpp"
#include "evireg/tensor.hpp"

namespace evireg {

struct TrainConfig {
  double lr = 3e-4;
  double weight_decay = 1e-4;
  int epochs = 60;
  int batch_size = 64;
  double lambda = 0.1;
  std::uint64_t seed = 0;
  bool augment = true;

  void validate() const;
};

// Half-cosine decay stepped per epoch: lr(0) = base, lr(epochs) = 0.
double cosine_lr(int epoch, const TrainConfig& config);

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

AdamWState make_adamw_state(const ParamSet& params);

// Bias-corrected Adam moments (beta1=0.9, beta2=0.999, eps=1e-8) with
// decoupled weight decay applied as p -= lr*wd*p, skipping tensors whose
// decay flag is off. Throws on NaN gradients, naming the parameter.
void adamw_step(ParamSet& params, const std::vector<Tensor>& grads,
                AdamWState& state, double lr, double weight_decay);

// One split of the corpus in model-input form.
struct TrainMatrix {
  Tensor inputs;                   // N x input_dim, [0,1]
  std::vector<double> target_norm; // normalized label years (regression target)
  std::vector<int> class_index;    // classifier bucket per row
  std::vector<double> true_years;  // for validation metrics
  std::int64_t size() const { return inputs.rows; }
};

struct EpochStats {
  int epoch;
  double lr;
  double train_loss;
  double val_mae_years;
  double val_picp;   // evidential only
  bool has_picp;
};

struct TrainResult {
  Model model;  // best-val-MAE weights
  std::vector<EpochStats> history;
};

// Scalar per-batch training loss on the tape (mean over rows):
// evidential NLL + regularizer, squared error, or cross-entropy.
NodeId build_training_loss(Tape& tape, const ModelConfig& config, NodeId head,
                           const Tensor& head_value, const TrainMatrix& data,
                           const std::vector<std::int64_t>& rows, double lambda);

// Horizontal flip (p=1/2) and small bilinear rotation (+/- 4 degrees) of a
// flattened side x side input row.
void augment_input_row(double* row, int side, Rng& rng);

// Deterministic full loop: seeded shuffle order, dropout masks, and init;
// keeps the epoch with the best validation MAE. epochs=0 returns the
// initialized model and empty history.
TrainResult train(const TrainMatrix& train_set, const TrainMatrix& val_set,
                  const ModelConfig& model_config, const TrainConfig& config);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

// Distinct label years in the corpus, ascending: the classifier's century
// buckets.
std::vector<double> distinct_labels(const Corpus& corpus);

// Extract + downsample one split into model-ready rows. Classifier targets
// are indices into config.class_labels.
TrainMatrix make_train_matrix(const Corpus& corpus, Split split,
                              const ModelConfig& config);

}  // namespace evireg

#endif  // EVIREG_TRAIN_HPP_
