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

#ifndef EVIREG_EVAL_HPP_
#define EVIREG_EVAL_HPP_

#include <string>
#include <utility>
#include <vector>

#include "evireg/baselines.hpp"
#include "evireg/data.hpp"
#include "evireg/model.hpp"

namespace evireg {

enum class PredictiveDist { kNone, kStudentT, kGaussian };

// One scored patch (or page, after aggregation). Distribution parameters
// are kept in years so intervals at any confidence can be reformed.
struct PredictionRecord {
  int patch_id = 0;
  int page_id = 0;
  int codex = 0;
  double true_year = 0.0;
  double predicted_year = 0.0;
  double fading = 0.0;  // latent page fading (synthetic ground truth)

  bool has_uncertainty = false;
  double total_std_years = 0.0;

  bool has_decomposition = false;  // evidential only
  double aleatoric_std_years = 0.0;
  double epistemic_scale = 0.0;  // 1/nu

  PredictiveDist dist = PredictiveDist::kNone;
  double center_years = 0.0;
  double scale_years = 0.0;
  double dof = 0.0;  // student-t only

  double interval_low_years = 0.0;   // at 90%
  double interval_high_years = 0.0;
};

std::pair<double, double> interval_at(const PredictionRecord& r, double confidence);

double mae(const std::vector<PredictionRecord>& records);
double bias(const std::vector<PredictionRecord>& records);

// Fraction of true years inside the closed interval at `confidence`.
double picp(const std::vector<PredictionRecord>& records, double confidence);
// Mean interval width at `confidence`, years.
double mpiw(const std::vector<PredictionRecord>& records, double confidence);

struct SpearmanResult {
  bool defined = false;
  double rho = 0.0;
  double p_value = 1.0;
};

// Average-rank assignment, Pearson on the ranks, p-value via the
// t-approximation. A constant input vector yields defined = false.
SpearmanResult spearman(const std::vector<double>& u, const std::vector<double>& e);

// (nominal, empirical coverage) per grid point.
std::vector<std::pair<double, double>> calibration_curve(
    const std::vector<PredictionRecord>& records, const std::vector<double>& grid);
std::vector<double> default_confidence_grid();  // 0.05 .. 0.95 step 0.05

struct SelectiveRow {
  double fraction;
  double mae_years;
  double mean_uncertainty_years;
};

// Keep the most-certain prefix (ascending total std, ties by patch id) at
// each retained fraction; fractions must lie in (0, 1].
std::vector<SelectiveRow> selective_prediction(
    const std::vector<PredictionRecord>& records, const std::vector<double>& fractions);
std::vector<double> default_retention_fractions();  // Table-3 style rows

struct PageAggregate {
  std::vector<PredictionRecord> pages;  // gaussian dist around the patch mean
  int single_patch_pages = 0;           // reported uncertainty 0, warned
};

// Page prediction = mean patch prediction; page uncertainty = sample (n-1)
// standard deviation of patch predictions; z-based interval.
PageAggregate aggregate_pages(const std::vector<PredictionRecord>& records,
                              double confidence = 0.9);

struct ReliabilityBin {
  double mean_std_years;
  double mean_abs_error_years;
  int count;
};

// Equal-count bins by predicted std (ties to the lower bin); the bins
// partition the records exactly.
std::vector<ReliabilityBin> reliability_diagram(
    const std::vector<PredictionRecord>& records, int n_bins);

struct CodexStats {
  int codex;
  std::string name;
  int count;
  double mae_years;
  SpearmanResult spearman_aleatoric;
};

struct EvalReport {
  int format_version = 1;
  std::string method;
  int passes = 1;
  int n_records = 0;
  double mae_years = 0.0;
  double bias_years = 0.0;
  bool has_intervals = false;
  double picp90 = 0.0;
  double mpiw_years = 0.0;
  bool has_uncertainty = false;
  bool has_decomposition = false;
  SpearmanResult spearman_total, spearman_aleatoric, spearman_epistemic;
  double mean_total_std_years = 0.0;
  std::vector<std::pair<double, double>> error_cdf;     // (error, fraction <=)
  std::vector<std::pair<double, double>> calibration;   // (nominal, empirical)
  std::vector<SelectiveRow> selective;
  std::vector<ReliabilityBin> reliability;
  std::vector<CodexStats> per_codex;
};

EvalReport build_report(const std::vector<PredictionRecord>& records,
                        const std::string& method, int passes,
                        const std::vector<std::string>& codex_names);

// Scoring passes over one corpus split. A degradation, when given, is
// applied to each extracted patch before downsampling, with a per-patch rng
// stream derived from the corpus seed.
std::vector<PredictionRecord> predict_records(const Model& model, const Corpus& corpus,
                                              Split split,
                                              const DegradationSpec* degradation = nullptr);
std::vector<PredictionRecord> predict_records_mc_dropout(
    const Model& model, const Corpus& corpus, Split split, int passes,
    std::uint64_t seed, const DegradationSpec* degradation = nullptr);
std::vector<PredictionRecord> predict_records_ensemble(
    const EnsembleBundle& bundle, const Corpus& corpus, Split split,
    const DegradationSpec* degradation = nullptr);

struct SpatialMaps {
  int grid_rows = 0;
  int grid_cols = 0;
  Tensor aleatoric_std_years;
  Tensor epistemic_scale;
};

// Sliding-window decomposition over one page (evidential model).
SpatialMaps spatial_uncertainty_map(const Model& model, const Page& page, int window,
                                    int stride);

// One row per patch: patch_id, codex, true_year, label_year, then the
// feature vector. Zero patches still writes the header.
void export_features(const Model& model, const Corpus& corpus, Split split,
                     const std::string& path);

struct DegradationRow {
  std::string label;
  double mae_years;
  double mean_std_years;
};

// Serialization. Reports are JSON (versioned); curves also go to CSVs.
void write_report_json(const EvalReport& report, const std::string& path);
EvalReport read_report_json(const std::string& path);
void write_calibration_csv(const EvalReport& report, const std::string& path);
void write_selective_csv(const EvalReport& report, const std::string& path);
void write_reliability_csv(const EvalReport& report, const std::string& path);
void write_error_cdf_csv(const EvalReport& report, const std::string& path);
void write_matrix_csv(const Tensor& m, const std::string& path);
void write_degradation_csv(const std::vector<DegradationRow>& rows, const std::string& path);

}  // namespace evireg

#endif  // EVIREG_EVAL_HPP_
