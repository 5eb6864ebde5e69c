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

#include "evireg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "evireg/errors.hpp"
#include "evireg/nig.hpp"
#include "evireg/special.hpp"

#include "json.hpp"

namespace evireg {

std::pair<double, double> interval_at(const PredictionRecord& r, double confidence) {
  if (!(confidence >= 0.0 && confidence < 1.0)) {
    throw DomainError("interval_at: confidence must lie in [0,1)");
  }
  switch (r.dist) {
    case PredictiveDist::kStudentT: {
      const double q = confidence == 0.0
                           ? 0.0
                           : student_t_quantile(r.dof, 0.5 * (1.0 + confidence));
      return {r.center_years - q * r.scale_years, r.center_years + q * r.scale_years};
    }
    case PredictiveDist::kGaussian: {
      const double z =
          confidence == 0.0 ? 0.0 : normal_quantile(0.5 * (1.0 + confidence));
      return {r.center_years - z * r.scale_years, r.center_years + z * r.scale_years};
    }
    case PredictiveDist::kNone:
      throw ContractError("interval_at: record carries no predictive distribution");
  }
  throw ContractError("interval_at: unknown distribution");
}

double mae(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw ContractError("mae: empty record set");
  double acc = 0.0;
  for (const auto& r : records) acc += std::fabs(r.predicted_year - r.true_year);
  return acc / static_cast<double>(records.size());
}

double bias(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw ContractError("bias: empty record set");
  double acc = 0.0;
  for (const auto& r : records) acc += r.predicted_year - r.true_year;
  return acc / static_cast<double>(records.size());
}

double picp(const std::vector<PredictionRecord>& records, double confidence) {
  if (records.empty()) throw ContractError("picp: empty record set");
  std::size_t covered = 0;
  for (const auto& r : records) {
    const auto [lo, hi] = interval_at(r, confidence);
    if (r.true_year >= lo && r.true_year <= hi) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(records.size());
}

double mpiw(const std::vector<PredictionRecord>& records, double confidence) {
  if (records.empty()) throw ContractError("mpiw: empty record set");
  double acc = 0.0;
  for (const auto& r : records) {
    const auto [lo, hi] = interval_at(r, confidence);
    acc += hi - lo;
  }
  return acc / static_cast<double>(records.size());
}

namespace {

// Average ranks (1-based), ties share the mean rank.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& u, const std::vector<double>& e) {
  if (u.size() != e.size()) {
    throw ShapeError("spearman: length mismatch, " + std::to_string(u.size()) +
                     " vs " + std::to_string(e.size()));
  }
  if (u.size() < 3) throw ContractError("spearman: need at least 3 observations");
  SpearmanResult out;
  const std::vector<double> ru = average_ranks(u), re = average_ranks(e);
  const double n = static_cast<double>(u.size());
  double mu = 0.0, me = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += ru[i];
    me += re[i];
  }
  mu /= n;
  me /= n;
  double cov = 0.0, vu = 0.0, ve = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cov += (ru[i] - mu) * (re[i] - me);
    vu += (ru[i] - mu) * (ru[i] - mu);
    ve += (re[i] - me) * (re[i] - me);
  }
  if (vu == 0.0 || ve == 0.0) {
    out.defined = false;  // constant vector: rho undefined, not NaN
    return out;
  }
  out.defined = true;
  out.rho = cov / std::sqrt(vu * ve);
  // p-value via t = rho sqrt((n-2) / (1 - rho^2))
  const double r2 = out.rho * out.rho;
  if (r2 >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t = std::fabs(out.rho) * std::sqrt((n - 2.0) / (1.0 - r2));
    out.p_value = 2.0 * (1.0 - student_t_cdf(t, n - 2.0));
  }
  return out;
}

std::vector<double> default_confidence_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  return grid;
}

std::vector<std::pair<double, double>> calibration_curve(
    const std::vector<PredictionRecord>& records, const std::vector<double>& grid) {
  if (records.empty()) throw ContractError("calibration_curve: empty record set");
  std::vector<std::pair<double, double>> out;
  out.reserve(grid.size());
  // Quantiles depend only on (dof, confidence); memoize per grid point so
  // large generative record sets stay cheap.
  for (double c : grid) {
    const double z = c == 0.0 ? 0.0 : normal_quantile(0.5 * (1.0 + c));
    std::map<double, double> tq;
    std::size_t covered = 0;
    for (const auto& r : records) {
      double q;
      switch (r.dist) {
        case PredictiveDist::kStudentT: {
          auto it = tq.find(r.dof);
          if (it == tq.end()) {
            it = tq.emplace(r.dof, c == 0.0 ? 0.0
                                            : student_t_quantile(r.dof, 0.5 * (1.0 + c)))
                     .first;
          }
          q = it->second;
          break;
        }
        case PredictiveDist::kGaussian:
          q = z;
          break;
        case PredictiveDist::kNone:
          throw ContractError("calibration_curve: record carries no distribution");
      }
      const double lo = r.center_years - q * r.scale_years;
      const double hi = r.center_years + q * r.scale_years;
      if (r.true_year >= lo && r.true_year <= hi) ++covered;
    }
    out.emplace_back(c, static_cast<double>(covered) / static_cast<double>(records.size()));
  }
  return out;
}

std::vector<double> default_retention_fractions() {
  return {1.0, 0.9, 0.5, 0.3, 0.2, 0.1};
}

std::vector<SelectiveRow> selective_prediction(
    const std::vector<PredictionRecord>& records, const std::vector<double>& fractions) {
  if (records.empty()) throw ContractError("selective_prediction: empty record set");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].total_std_years != records[b].total_std_years) {
      return records[a].total_std_years < records[b].total_std_years;
    }
    return records[a].patch_id < records[b].patch_id;  // deterministic ties
  });

  std::vector<SelectiveRow> rows;
  rows.reserve(fractions.size());
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw DomainError("selective_prediction: fraction must lie in (0,1], got " +
                        std::to_string(f));
    }
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(f * static_cast<double>(records.size()))));
    double err = 0.0, unc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const PredictionRecord& r = records[order[i]];
      err += std::fabs(r.predicted_year - r.true_year);
      unc += r.total_std_years;
    }
    rows.push_back({f, err / static_cast<double>(k), unc / static_cast<double>(k)});
  }
  return rows;
}

PageAggregate aggregate_pages(const std::vector<PredictionRecord>& records,
                              double confidence) {
  if (records.empty()) throw ContractError("aggregate_pages: empty record set");
  // Group by page id, keeping first-seen order for determinism.
  std::vector<int> page_ids;
  std::vector<std::vector<const PredictionRecord*>> groups;
  for (const auto& r : records) {
    std::size_t g = 0;
    for (; g < page_ids.size(); ++g) {
      if (page_ids[g] == r.page_id) break;
    }
    if (g == page_ids.size()) {
      page_ids.push_back(r.page_id);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }

  PageAggregate out;
  const double z = normal_quantile(0.5 * (1.0 + confidence));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    const double n = static_cast<double>(members.size());
    double mean = 0.0;
    for (const auto* r : members) mean += r->predicted_year;
    mean /= n;
    double std_years = 0.0;
    if (members.size() > 1) {
      double acc = 0.0;
      for (const auto* r : members) {
        acc += (r->predicted_year - mean) * (r->predicted_year - mean);
      }
      std_years = std::sqrt(acc / (n - 1.0));  // sample std
    } else {
      ++out.single_patch_pages;
    }

    PredictionRecord page;
    page.patch_id = -1;
    page.page_id = page_ids[g];
    page.codex = members.front()->codex;
    page.true_year = members.front()->true_year;
    page.fading = members.front()->fading;
    page.predicted_year = mean;
    page.has_uncertainty = true;
    page.total_std_years = std_years;
    page.dist = PredictiveDist::kGaussian;
    page.center_years = mean;
    page.scale_years = std_years;
    page.interval_low_years = mean - z * std_years;
    page.interval_high_years = mean + z * std_years;
    out.pages.push_back(page);
  }
  if (out.single_patch_pages > 0) {
    std::fprintf(stderr, "warning: %d page(s) with a single patch; page uncertainty 0\n",
                 out.single_patch_pages);
  }
  return out;
}

std::vector<ReliabilityBin> reliability_diagram(
    const std::vector<PredictionRecord>& records, int n_bins) {
  if (n_bins < 1) throw ConfigError("reliability_diagram: n_bins must be >= 1");
  if (records.empty()) throw ContractError("reliability_diagram: empty record set");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].total_std_years != records[b].total_std_years) {
      return records[a].total_std_years < records[b].total_std_years;
    }
    return records[a].patch_id < records[b].patch_id;
  });
  const std::size_t n = records.size();
  std::vector<ReliabilityBin> bins;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t beg = static_cast<std::size_t>(b) * n / static_cast<std::size_t>(n_bins);
    const std::size_t end =
        static_cast<std::size_t>(b + 1) * n / static_cast<std::size_t>(n_bins);
    if (beg == end) {
      bins.push_back({0.0, 0.0, 0});
      continue;
    }
    double s = 0.0, e = 0.0;
    for (std::size_t i = beg; i < end; ++i) {
      const PredictionRecord& r = records[order[i]];
      s += r.total_std_years;
      e += std::fabs(r.predicted_year - r.true_year);
    }
    const double cnt = static_cast<double>(end - beg);
    bins.push_back({s / cnt, e / cnt, static_cast<int>(end - beg)});
  }
  return bins;
}

EvalReport build_report(const std::vector<PredictionRecord>& records,
                        const std::string& method, int passes,
                        const std::vector<std::string>& codex_names) {
  EvalReport rep;
  rep.method = method;
  rep.passes = passes;
  rep.n_records = static_cast<int>(records.size());
  rep.mae_years = mae(records);
  rep.bias_years = bias(records);

  // Error CDF over sorted absolute errors.
  std::vector<double> errs;
  errs.reserve(records.size());
  for (const auto& r : records) errs.push_back(std::fabs(r.predicted_year - r.true_year));
  std::vector<double> sorted_errs = errs;
  std::sort(sorted_errs.begin(), sorted_errs.end());
  rep.error_cdf.reserve(sorted_errs.size());
  for (std::size_t i = 0; i < sorted_errs.size(); ++i) {
    rep.error_cdf.emplace_back(sorted_errs[i],
                               static_cast<double>(i + 1) / static_cast<double>(sorted_errs.size()));
  }

  rep.has_intervals = !records.empty() && records.front().dist != PredictiveDist::kNone;
  if (rep.has_intervals) {
    rep.picp90 = picp(records, 0.9);
    rep.mpiw_years = mpiw(records, 0.9);
    rep.calibration = calibration_curve(records, default_confidence_grid());
  }

  rep.has_uncertainty = !records.empty() && records.front().has_uncertainty;
  if (rep.has_uncertainty) {
    std::vector<double> total;
    total.reserve(records.size());
    for (const auto& r : records) total.push_back(r.total_std_years);
    rep.spearman_total = spearman(total, errs);
    rep.mean_total_std_years =
        std::accumulate(total.begin(), total.end(), 0.0) / static_cast<double>(total.size());
    rep.selective = selective_prediction(records, default_retention_fractions());
    rep.reliability = reliability_diagram(records, std::min<int>(10, rep.n_records));
  }

  rep.has_decomposition = !records.empty() && records.front().has_decomposition;
  if (rep.has_decomposition) {
    std::vector<double> alea, epi;
    alea.reserve(records.size());
    epi.reserve(records.size());
    for (const auto& r : records) {
      alea.push_back(r.aleatoric_std_years);
      epi.push_back(r.epistemic_scale);
    }
    rep.spearman_aleatoric = spearman(alea, errs);
    rep.spearman_epistemic = spearman(epi, errs);
  }

  // Per-codex breakdown.
  int max_codex = -1;
  for (const auto& r : records) max_codex = std::max(max_codex, r.codex);
  for (int c = 0; c <= max_codex; ++c) {
    std::vector<PredictionRecord> sub;
    for (const auto& r : records) {
      if (r.codex == c) sub.push_back(r);
    }
    if (sub.empty()) continue;
    CodexStats cs;
    cs.codex = c;
    cs.name = c < static_cast<int>(codex_names.size()) ? codex_names[static_cast<std::size_t>(c)]
                                                       : "codex" + std::to_string(c);
    cs.count = static_cast<int>(sub.size());
    cs.mae_years = mae(sub);
    if (rep.has_decomposition && sub.size() >= 3) {
      std::vector<double> alea, err;
      for (const auto& r : sub) {
        alea.push_back(r.aleatoric_std_years);
        err.push_back(std::fabs(r.predicted_year - r.true_year));
      }
      cs.spearman_aleatoric = spearman(alea, err);
    }
    rep.per_codex.push_back(cs);
  }
  return rep;
}

namespace {

struct SplitView {
  std::vector<const PatchRef*> patches;
};

SplitView collect_split(const Corpus& corpus, Split split) {
  SplitView v;
  for (const PatchRef& ref : corpus.patches) {
    if (corpus.page_split[static_cast<std::size_t>(ref.page_index)] == split) {
      v.patches.push_back(&ref);
    }
  }
  return v;
}

// Extract (and optionally degrade) patches, downsampled into model rows.
Tensor make_inputs(const Corpus& corpus, const SplitView& view, int input_side,
                   const DegradationSpec* degradation) {
  const int psz = corpus.config.patch_size;
  Tensor inputs(static_cast<std::int64_t>(view.patches.size()),
                static_cast<std::int64_t>(input_side) * input_side);
  const Rng degrade_master = Rng(corpus.config.seed).derive("degrade-eval");
  for (std::size_t i = 0; i < view.patches.size(); ++i) {
    const PatchRef& ref = *view.patches[i];
    const Page& page = corpus.pages[static_cast<std::size_t>(ref.page_index)];
    std::vector<std::uint8_t> px = extract_patch(page, ref.row, ref.col, psz);
    if (degradation != nullptr && degradation->kind != DegradationKind::kNone) {
      Rng rng = degrade_master.derive("patch", static_cast<std::uint64_t>(ref.id));
      px = degrade(px, psz, *degradation, rng);
    }
    const Tensor row = downsample_patch(px.data(), psz, input_side);
    std::copy(row.data.begin(), row.data.end(), inputs.row(static_cast<std::int64_t>(i)));
  }
  return inputs;
}

PredictionRecord base_record(const Corpus& corpus, const PatchRef& ref) {
  const Page& page = corpus.pages[static_cast<std::size_t>(ref.page_index)];
  PredictionRecord r;
  r.patch_id = ref.id;
  r.page_id = page.id;
  r.codex = page.codex;
  r.true_year = page.true_year;
  r.fading = page.fading;
  return r;
}

}  // namespace

std::vector<PredictionRecord> predict_records(const Model& model, const Corpus& corpus,
                                              Split split,
                                              const DegradationSpec* degradation) {
  const SplitView view = collect_split(corpus, split);
  const Tensor inputs =
      make_inputs(corpus, view, model.config().extractor.input_side, degradation);
  const YearScale scale;
  std::vector<PredictionRecord> out;
  out.reserve(view.patches.size());

  switch (model.config().kind) {
    case ModelKind::kEvidential: {
      const std::vector<NIGParams> ps = model.infer_nig(inputs);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        PredictionRecord r = base_record(corpus, *view.patches[i]);
        const NIGParams& p = ps[i];
        const UncertaintySummary s = decompose(p);
        r.predicted_year = scale.denormalize(p.gamma);
        r.has_uncertainty = true;
        r.has_decomposition = true;
        r.total_std_years = std::sqrt(s.total_var) * scale.span;
        r.aleatoric_std_years = std::sqrt(s.aleatoric_var) * scale.span;
        r.epistemic_scale = s.epistemic_scale;
        r.dist = PredictiveDist::kStudentT;
        r.center_years = r.predicted_year;
        r.scale_years = predictive_scale(p) * scale.span;
        r.dof = 2.0 * p.alpha;
        const auto [lo, hi] = interval_at(r, 0.9);
        r.interval_low_years = lo;
        r.interval_high_years = hi;
        out.push_back(r);
      }
      break;
    }
    case ModelKind::kPoint: {
      const std::vector<double> preds = model.infer_point(inputs);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        PredictionRecord r = base_record(corpus, *view.patches[i]);
        r.predicted_year = scale.denormalize(preds[i]);
        out.push_back(r);
      }
      break;
    }
    case ModelKind::kClassifier: {
      const std::vector<double> years = model.logits_to_years(model.infer_logits(inputs));
      for (std::size_t i = 0; i < years.size(); ++i) {
        PredictionRecord r = base_record(corpus, *view.patches[i]);
        r.predicted_year = years[i];
        out.push_back(r);
      }
      break;
    }
  }
  return out;
}

std::vector<PredictionRecord> predict_records_mc_dropout(
    const Model& model, const Corpus& corpus, Split split, int passes,
    std::uint64_t seed, const DegradationSpec* degradation) {
  const SplitView view = collect_split(corpus, split);
  const Tensor inputs =
      make_inputs(corpus, view, model.config().extractor.input_side, degradation);
  const YearScale scale;
  std::vector<PredictionRecord> out;
  out.reserve(view.patches.size());
  for (std::size_t i = 0; i < view.patches.size(); ++i) {
    Tensor row(1, inputs.cols);
    std::copy(inputs.row(static_cast<std::int64_t>(i)),
              inputs.row(static_cast<std::int64_t>(i)) + inputs.cols, row.data.begin());
    const auto [mean, var] = mc_dropout_predict(
        model, row, passes, seed, static_cast<std::uint64_t>(view.patches[i]->id));
    PredictionRecord r = base_record(corpus, *view.patches[i]);
    r.predicted_year = scale.denormalize(mean);
    r.has_uncertainty = true;
    r.total_std_years = std::sqrt(var) * scale.span;
    r.dist = PredictiveDist::kGaussian;
    r.center_years = r.predicted_year;
    r.scale_years = r.total_std_years;
    const auto [lo, hi] = interval_at(r, 0.9);
    r.interval_low_years = lo;
    r.interval_high_years = hi;
    out.push_back(r);
  }
  return out;
}

std::vector<PredictionRecord> predict_records_ensemble(
    const EnsembleBundle& bundle, const Corpus& corpus, Split split,
    const DegradationSpec* degradation) {
  if (bundle.members.empty()) throw ConfigError("ensemble: empty bundle");
  const SplitView view = collect_split(corpus, split);
  const Tensor inputs = make_inputs(
      corpus, view, bundle.members.front().config().extractor.input_side, degradation);
  std::vector<double> means, vars;
  ensemble_predict_batch(bundle, inputs, means, vars);
  const YearScale scale;
  std::vector<PredictionRecord> out;
  out.reserve(view.patches.size());
  for (std::size_t i = 0; i < view.patches.size(); ++i) {
    PredictionRecord r = base_record(corpus, *view.patches[i]);
    r.predicted_year = scale.denormalize(means[i]);
    r.has_uncertainty = true;
    r.total_std_years = std::sqrt(vars[i]) * scale.span;
    r.dist = PredictiveDist::kGaussian;
    r.center_years = r.predicted_year;
    r.scale_years = r.total_std_years;
    const auto [lo, hi] = interval_at(r, 0.9);
    r.interval_low_years = lo;
    r.interval_high_years = hi;
    out.push_back(r);
  }
  return out;
}

SpatialMaps spatial_uncertainty_map(const Model& model, const Page& page, int window,
                                    int stride) {
  SpatialMaps maps;
  const std::vector<PatchRef> refs = tile_page(page, 0, window, stride, 0);
  if (refs.empty()) {
    std::fprintf(stderr, "warning: page %d smaller than window %d; empty maps\n",
                 page.id, window);
    return maps;
  }
  const int per_axis = (page.side - window) / stride + 1;
  maps.grid_rows = per_axis;
  maps.grid_cols = per_axis;
  maps.aleatoric_std_years = Tensor(per_axis, per_axis);
  maps.epistemic_scale = Tensor(per_axis, per_axis);

  const int side = model.config().extractor.input_side;
  Tensor inputs(static_cast<std::int64_t>(refs.size()), static_cast<std::int64_t>(side) * side);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::vector<std::uint8_t> px = extract_patch(page, refs[i].row, refs[i].col, window);
    const Tensor row = downsample_patch(px.data(), window, side);
    std::copy(row.data.begin(), row.data.end(), inputs.row(static_cast<std::int64_t>(i)));
  }
  const std::vector<NIGParams> ps = model.infer_nig(inputs);
  const YearScale scale;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const UncertaintySummary s = decompose(ps[i]);
    const std::int64_t r = refs[i].row / stride, c = refs[i].col / stride;
    maps.aleatoric_std_years.at(r, c) = std::sqrt(s.aleatoric_var) * scale.span;
    maps.epistemic_scale.at(r, c) = s.epistemic_scale;
  }
  return maps;
}

void export_features(const Model& model, const Corpus& corpus, Split split,
                     const std::string& path) {
  const SplitView view = collect_split(corpus, split);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write feature export: " + path);
  const int fdim = model.config().extractor.feature_dim;
  out << "patch_id,codex,true_year,label_year";
  for (int f = 0; f < fdim; ++f) out << ",f" << f;
  out << "\n";
  if (view.patches.empty()) return;

  const Tensor inputs =
      make_inputs(corpus, view, model.config().extractor.input_side, nullptr);
  const Tensor feats = model.features_eval(inputs);
  char buf[64];
  for (std::size_t i = 0; i < view.patches.size(); ++i) {
    const PatchRef& ref = *view.patches[i];
    const Page& page = corpus.pages[static_cast<std::size_t>(ref.page_index)];
    out << ref.id << "," << page.codex << ",";
    std::snprintf(buf, sizeof buf, "%.10g,%.10g", page.true_year, page.label_year);
    out << buf;
    for (int f = 0; f < fdim; ++f) {
      std::snprintf(buf, sizeof buf, ",%.10g", feats.at(static_cast<std::int64_t>(i), f));
      out << buf;
    }
    out << "\n";
  }
}

namespace {

nlohmann::json spearman_to_json(const SpearmanResult& s) {
  nlohmann::json j;
  j["defined"] = s.defined;
  if (s.defined) {
    j["rho"] = s.rho;
    j["p_value"] = s.p_value;
  }
  return j;
}

SpearmanResult spearman_from_json(const nlohmann::json& j) {
  SpearmanResult s;
  s.defined = j.at("defined").get<bool>();
  if (s.defined) {
    s.rho = j.at("rho").get<double>();
    s.p_value = j.at("p_value").get<double>();
  }
  return s;
}

}  // namespace

void write_report_json(const EvalReport& rep, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = rep.format_version;
  j["method"] = rep.method;
  j["passes"] = rep.passes;
  j["n_records"] = rep.n_records;
  j["mae_years"] = rep.mae_years;
  j["bias_years"] = rep.bias_years;
  j["has_intervals"] = rep.has_intervals;
  if (rep.has_intervals) {
    j["picp90"] = rep.picp90;
    j["mpiw_years"] = rep.mpiw_years;
    j["calibration"] = rep.calibration;
  }
  j["has_uncertainty"] = rep.has_uncertainty;
  if (rep.has_uncertainty) {
    j["mean_total_std_years"] = rep.mean_total_std_years;
    j["spearman_total"] = spearman_to_json(rep.spearman_total);
    nlohmann::json sel = nlohmann::json::array();
    for (const auto& row : rep.selective) {
      sel.push_back({{"fraction", row.fraction},
                     {"mae_years", row.mae_years},
                     {"mean_uncertainty_years", row.mean_uncertainty_years}});
    }
    j["selective"] = sel;
    nlohmann::json rel = nlohmann::json::array();
    for (const auto& b : rep.reliability) {
      rel.push_back({{"mean_std_years", b.mean_std_years},
                     {"mean_abs_error_years", b.mean_abs_error_years},
                     {"count", b.count}});
    }
    j["reliability"] = rel;
  }
  j["has_decomposition"] = rep.has_decomposition;
  if (rep.has_decomposition) {
    j["spearman_aleatoric"] = spearman_to_json(rep.spearman_aleatoric);
    j["spearman_epistemic"] = spearman_to_json(rep.spearman_epistemic);
  }
  j["error_cdf"] = rep.error_cdf;
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& c : rep.per_codex) {
    nlohmann::json cj;
    cj["codex"] = c.codex;
    cj["name"] = c.name;
    cj["count"] = c.count;
    cj["mae_years"] = c.mae_years;
    cj["spearman_aleatoric"] = spearman_to_json(c.spearman_aleatoric);
    pc.push_back(cj);
  }
  j["per_codex"] = pc;

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read report: " + path);
  nlohmann::json j;
  in >> j;
  EvalReport rep;
  rep.format_version = j.at("format_version").get<int>();
  rep.method = j.at("method").get<std::string>();
  rep.passes = j.at("passes").get<int>();
  rep.n_records = j.at("n_records").get<int>();
  rep.mae_years = j.at("mae_years").get<double>();
  rep.bias_years = j.at("bias_years").get<double>();
  rep.has_intervals = j.at("has_intervals").get<bool>();
  if (rep.has_intervals) {
    rep.picp90 = j.at("picp90").get<double>();
    rep.mpiw_years = j.at("mpiw_years").get<double>();
    rep.calibration = j.at("calibration").get<std::vector<std::pair<double, double>>>();
  }
  rep.has_uncertainty = j.at("has_uncertainty").get<bool>();
  if (rep.has_uncertainty) {
    rep.mean_total_std_years = j.at("mean_total_std_years").get<double>();
    rep.spearman_total = spearman_from_json(j.at("spearman_total"));
    for (const auto& row : j.at("selective")) {
      rep.selective.push_back({row.at("fraction").get<double>(),
                               row.at("mae_years").get<double>(),
                               row.at("mean_uncertainty_years").get<double>()});
    }
    for (const auto& b : j.at("reliability")) {
      rep.reliability.push_back({b.at("mean_std_years").get<double>(),
                                 b.at("mean_abs_error_years").get<double>(),
                                 b.at("count").get<int>()});
    }
  }
  rep.has_decomposition = j.at("has_decomposition").get<bool>();
  if (rep.has_decomposition) {
    rep.spearman_aleatoric = spearman_from_json(j.at("spearman_aleatoric"));
    rep.spearman_epistemic = spearman_from_json(j.at("spearman_epistemic"));
  }
  rep.error_cdf = j.at("error_cdf").get<std::vector<std::pair<double, double>>>();
  for (const auto& cj : j.at("per_codex")) {
    CodexStats c;
    c.codex = cj.at("codex").get<int>();
    c.name = cj.at("name").get<std::string>();
    c.count = cj.at("count").get<int>();
    c.mae_years = cj.at("mae_years").get<double>();
    c.spearman_aleatoric = spearman_from_json(cj.at("spearman_aleatoric"));
    rep.per_codex.push_back(c);
  }
  return rep;
}

namespace {

void open_csv(std::ofstream& out, const std::string& path) {
  out.open(path);
  if (!out) throw ConfigError("cannot write csv: " + path);
}

}  // namespace

void write_calibration_csv(const EvalReport& rep, const std::string& path) {
  std::ofstream out;
  open_csv(out, path);
  out << "nominal,empirical\n";
  char buf[96];
  for (const auto& [nom, emp] : rep.calibration) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", nom, emp);
    out << buf;
  }
}

void write_selective_csv(const EvalReport& rep, const std::string& path) {
  std::ofstream out;
  open_csv(out, path);
  out << "fraction,mae_years,mean_uncertainty_years\n";
  char buf[128];
  for (const auto& row : rep.selective) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", row.fraction, row.mae_years,
                  row.mean_uncertainty_years);
    out << buf;
  }
}

void write_reliability_csv(const EvalReport& rep, const std::string& path) {
  std::ofstream out;
  open_csv(out, path);
  out << "bin,mean_std_years,mean_abs_error_years,count\n";
  char buf[128];
  for (std::size_t i = 0; i < rep.reliability.size(); ++i) {
    const auto& b = rep.reliability[i];
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%d\n", i, b.mean_std_years,
                  b.mean_abs_error_years, b.count);
    out << buf;
  }
}

void write_error_cdf_csv(const EvalReport& rep, const std::string& path) {
  std::ofstream out;
  open_csv(out, path);
  out << "abs_error_years,fraction\n";
  char buf[96];
  for (const auto& [e, f] : rep.error_cdf) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", e, f);
    out << buf;
  }
}

void write_matrix_csv(const Tensor& m, const std::string& path) {
  std::ofstream out;
  open_csv(out, path);
  char buf[64];
  for (std::int64_t r = 0; r < m.rows; ++r) {
    for (std::int64_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.10g", m.at(r, c));
      out << buf << (c + 1 == m.cols ? "" : ",");
    }
    out << "\n";
  }
}

void write_degradation_csv(const std::vector<DegradationRow>& rows, const std::string& path) {
  std::ofstream out;
  open_csv(out, path);
  out << "degradation,mae_years,mean_uncertainty_years\n";
  char buf[192];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", row.label.c_str(), row.mae_years,
                  row.mean_std_years);
    out << buf;
  }
}

}  // namespace evireg
