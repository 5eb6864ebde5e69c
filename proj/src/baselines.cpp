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

#include "evireg/baselines.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "evireg/errors.hpp"
#include "evireg/rng.hpp"

#include "json.hpp"

namespace evireg {

std::pair<double, double> mc_dropout_predict(const Model& model,
                                             const Tensor& input_row, int passes,
                                             std::uint64_t master_seed,
                                             std::uint64_t patch_id) {
  if (passes < 1) throw ConfigError("mc_dropout: passes must be >= 1");
  static bool warned_rate = false, warned_t1 = false;
  if (model.config().extractor.dropout_rate == 0.0 && !warned_rate) {
    std::fprintf(stderr,
                 "warning: mc_dropout on a model with dropout rate 0; variance "
                 "will be zero\n");
    warned_rate = true;
  }
  if (passes == 1 && !warned_t1) {
    std::fprintf(stderr, "warning: mc_dropout with T=1; variance undefined, reported as 0\n");
    warned_t1 = true;
  }

  // Without dropout the passes are all identical: report the deterministic
  // output with zero variance.
  if (model.config().extractor.dropout_rate == 0.0) {
    return {model.infer_point(input_row)[0], 0.0};
  }

  // T independent stochastic passes as one batch: the recorded dropout mask
  // draws one element per activation, so rows get independent masks.
  Tensor batch(passes, input_row.cols);
  for (int i = 0; i < passes; ++i) {
    std::copy(input_row.data.begin(), input_row.data.end(), batch.row(i));
  }
  const std::uint64_t tape_seed =
      Rng(master_seed).derive("mcdropout", patch_id).next_u64();
  const std::vector<double> preds = model.infer_point_stochastic(batch, tape_seed);

  double mean = 0.0;
  for (double p : preds) mean += p;
  mean /= static_cast<double>(passes);
  double var = 0.0;
  if (passes > 1) {
    for (double p : preds) var += (p - mean) * (p - mean);
    var /= static_cast<double>(passes - 1);  // unbiased
  }
  return {mean, var};
}

std::pair<double, double> ensemble_predict(const EnsembleBundle& bundle,
                                           const Tensor& input_row) {
  if (bundle.members.empty()) throw ConfigError("ensemble: empty bundle");
  double mean = 0.0;
  std::vector<double> preds;
  preds.reserve(bundle.members.size());
  for (const Model& m : bundle.members) {
    preds.push_back(m.infer_point(input_row)[0]);
    mean += preds.back();
  }
  mean /= static_cast<double>(preds.size());
  double var = 0.0;
  for (double p : preds) var += (p - mean) * (p - mean);
  var /= static_cast<double>(preds.size());  // population variance
  return {mean, var};
}

void ensemble_predict_batch(const EnsembleBundle& bundle, const Tensor& inputs,
                            std::vector<double>& means, std::vector<double>& vars) {
  if (bundle.members.empty()) throw ConfigError("ensemble: empty bundle");
  const std::size_t n = static_cast<std::size_t>(inputs.rows);
  const std::size_t k = bundle.members.size();
  std::vector<std::vector<double>> preds;
  preds.reserve(k);
  for (const Model& m : bundle.members) preds.push_back(m.infer_point(inputs));
  means.assign(n, 0.0);
  vars.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) means[i] += preds[j][i];
    means[i] /= static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) {
      const double d = preds[j][i] - means[i];
      vars[i] += d * d;
    }
    vars[i] /= static_cast<double>(k);
  }
}

void save_bundle_manifest(const std::vector<std::string>& checkpoint_paths,
                          const std::vector<std::uint64_t>& seeds,
                          const std::string& path) {
  if (checkpoint_paths.size() != seeds.size()) {
    throw ConfigError("bundle manifest: paths and seeds disagree in length");
  }
  nlohmann::json j;
  j["format_version"] = 1;
  j["members"] = nlohmann::json::array();
  for (std::size_t i = 0; i < checkpoint_paths.size(); ++i) {
    j["members"].push_back({{"checkpoint", checkpoint_paths[i]}, {"seed", seeds[i]}});
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write bundle manifest: " + path);
  out << j.dump(2) << "\n";
}

EnsembleBundle load_bundle(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot read bundle manifest: " + manifest_path);
  nlohmann::json j;
  in >> j;
  EnsembleBundle bundle;
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  for (const auto& m : j.at("members")) {
    std::filesystem::path p = m.at("checkpoint").get<std::string>();
    if (p.is_relative()) p = dir / p;
    bundle.members.push_back(load_checkpoint(p.string()));
    bundle.seeds.push_back(m.at("seed").get<std::uint64_t>());
  }
  if (bundle.members.empty()) throw ConfigError("bundle manifest lists no members");
  return bundle;
}

}  // namespace evireg
