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

#ifndef EVIREG_BASELINES_HPP_
#define EVIREG_BASELINES_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evireg/model.hpp"

namespace evireg {

struct MCDropoutConfig {
  int passes = 50;  // T
};

// Mean and unbiased variance (normalized years) of T stochastic forward
// passes with dropout active. The T passes run as one batched forward whose
// mask stream derives from (master seed, patch id), so parallel evaluation
// over patches matches the serial order. T=1 reports variance 0 with a
// warning; a model trained without dropout also warns (variance will be 0).
std::pair<double, double> mc_dropout_predict(const Model& model,
                                             const Tensor& input_row, int passes,
                                             std::uint64_t master_seed,
                                             std::uint64_t patch_id);

// Independently trained point regressors differing only in seed.
struct EnsembleBundle {
  std::vector<Model> members;
  std::vector<std::uint64_t> seeds;
};

// Mean of member predictions and the population variance across members
// (normalized years). Permutation-invariant in member order.
std::pair<double, double> ensemble_predict(const EnsembleBundle& bundle,
                                           const Tensor& input_row);

// Batched variant: one forward per member over all rows.
void ensemble_predict_batch(const EnsembleBundle& bundle, const Tensor& inputs,
                            std::vector<double>& means, std::vector<double>& vars);

// Manifest file: member checkpoint paths and seeds.
void save_bundle_manifest(const std::vector<std::string>& checkpoint_paths,
                          const std::vector<std::uint64_t>& seeds,
                          const std::string& path);
EnsembleBundle load_bundle(const std::string& manifest_path);

}  // namespace evireg

#endif  // EVIREG_BASELINES_HPP_
