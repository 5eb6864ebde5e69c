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

#include "evireg/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "evireg/baselines.hpp"
#include "evireg/data.hpp"
#include "evireg/errors.hpp"
#include "evireg/eval.hpp"
#include "evireg/model.hpp"
#include "evireg/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace evireg {

namespace fs = std::filesystem;

namespace {

// Output-directory audit trail: partial outputs stay flagged INCOMPLETE.
struct OutputDir {
  fs::path dir;

  explicit OutputDir(const std::string& path) : dir(path) {
    fs::create_directories(dir);
    std::ofstream marker(dir / "INCOMPLETE");
    marker << "command did not finish\n";
  }
  void echo_config(const nlohmann::json& j) const {
    std::ofstream out(dir / "config_echo.json");
    out << j.dump(2) << "\n";
  }
  void finish() const { fs::remove(dir / "INCOMPLETE"); }
  std::string file(const std::string& name) const { return (dir / name).string(); }
};

nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// Config file values fill in flags the user did not pass; flags win.
template <typename T>
void merge_option(const nlohmann::json& cfg, const char* key, const CLI::Option* opt,
                  T& target) {
  if (opt != nullptr && opt->count() > 0) return;
  if (cfg.contains(key)) target = cfg.at(key).get<T>();
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split: " + name);
}

struct EvaluateOutputs {
  EvalReport report;
};

void write_standard_outputs(const EvalReport& report,
                            const std::vector<PredictionRecord>& records,
                            const OutputDir& out) {
  write_report_json(report, out.file("report.json"));
  write_error_cdf_csv(report, out.file("error-cdf.csv"));
  if (report.has_intervals) {
    write_calibration_csv(report, out.file("calibration-curve.csv"));
  }
  if (report.has_uncertainty) {
    write_selective_csv(report, out.file("selective.csv"));
    write_reliability_csv(report, out.file("reliability.csv"));
    // Page-level aggregation (patch mean, inter-patch std).
    const PageAggregate agg = aggregate_pages(records);
    std::vector<std::string> names;
    const EvalReport page_report = build_report(agg.pages, report.method + " [pages]",
                                                report.passes, names);
    write_report_json(page_report, out.file("page_report.json"));
  }
}

std::vector<std::string> codex_names(const Corpus& corpus) {
  std::vector<std::string> names;
  for (const CodexSpec& c : corpus.config.codices) names.push_back(c.name);
  return names;
}

int cmd_generate(CLI::App& app, const std::vector<std::string>& args);

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"evireg: evidential date regression on manuscript patches"};
  app.require_subcommand(1);

  // ---------------------------------------------------------------- generate
  auto* gen = app.add_subcommand("generate", "render a synthetic corpus to disk");
  std::string gen_out, gen_config;
  CorpusConfig corpus_cfg = default_corpus_config();
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--config", gen_config, "JSON config file (flags win)");
  auto* o_ppc = gen->add_option("--pages-per-codex", corpus_cfg.pages_per_codex);
  auto* o_side = gen->add_option("--page-side", corpus_cfg.page_side);
  auto* o_patch = gen->add_option("--patch-size", corpus_cfg.patch_size);
  auto* o_stride = gen->add_option("--stride", corpus_cfg.stride);
  auto* o_coff = gen->add_option("--century-offset", corpus_cfg.century_offset);
  auto* o_dark = gen->add_option("--dark-threshold", corpus_cfg.dark_threshold);
  auto* o_blankf = gen->add_option("--blank-fraction", corpus_cfg.blank_fraction);
  auto* o_blurt = gen->add_option("--blur-threshold", corpus_cfg.blur_threshold);
  auto* o_fade = gen->add_option("--fading-exponent", corpus_cfg.fading_exponent);

  // ------------------------------------------------------------------- train
  auto* tr = app.add_subcommand("train", "train a model on a generated corpus");
  std::string tr_corpus, tr_out, tr_config, tr_model = "evidential";
  TrainConfig train_cfg;
  ExtractorConfig ext_cfg;
  int ensemble_members = 0;
  bool no_augment = false;
  std::uint64_t tr_seed = 0;
  tr->add_option("--corpus", tr_corpus, "corpus directory")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--model", tr_model, "evidential | point | classifier");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "master seed")->required();
  tr->add_option("--config", tr_config, "JSON config file (flags win)");
  auto* o_epochs = tr->add_option("--epochs", train_cfg.epochs);
  auto* o_bs = tr->add_option("--batch-size", train_cfg.batch_size);
  auto* o_lr = tr->add_option("--lr", train_cfg.lr);
  auto* o_wd = tr->add_option("--weight-decay", train_cfg.weight_decay);
  auto* o_lambda = tr->add_option("--lambda", train_cfg.lambda);
  auto* o_ens = tr->add_option("--ensemble", ensemble_members,
                               "train N point-regressor members");
  auto* o_noaug = tr->add_flag("--no-augment", no_augment);
  auto* o_iside = tr->add_option("--input-side", ext_cfg.input_side);
  auto* o_hidden = tr->add_option("--hidden", ext_cfg.hidden_widths);
  auto* o_fdim = tr->add_option("--feature-dim", ext_cfg.feature_dim);
  auto* o_drop = tr->add_option("--dropout", ext_cfg.dropout_rate);

  // ---------------------------------------------------------------- evaluate
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a corpus split");
  std::string ev_corpus, ev_out, ev_checkpoint, ev_bundle, ev_split = "test";
  int ev_mc_passes = 0;
  int ev_spatial_page = -1;
  bool ev_export_features = false;
  std::uint64_t ev_seed = 0;
  ev->add_option("--corpus", ev_corpus)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--checkpoint", ev_checkpoint, "model checkpoint");
  ev->add_option("--bundle", ev_bundle, "ensemble bundle manifest");
  ev->add_option("--mc-dropout", ev_mc_passes, "MC-dropout passes T");
  ev->add_option("--split", ev_split, "train | val | test");
  ev->add_option("--seed", ev_seed, "seed for stochastic evaluation");
  ev->add_option("--spatial-page", ev_spatial_page,
                 "page id for sliding-window uncertainty maps");
  ev->add_flag("--export-features", ev_export_features);

  // ------------------------------------------------------------ degrade-eval
  auto* dg = app.add_subcommand("degrade-eval",
                                "score a checkpoint under the degradation suite");
  std::string dg_corpus, dg_out, dg_checkpoint, dg_split = "test";
  dg->add_option("--corpus", dg_corpus)->required();
  dg->add_option("--out", dg_out)->required();
  dg->add_option("--checkpoint", dg_checkpoint)->required();
  dg->add_option("--split", dg_split);

  // --------------------------------------------------------------- selective
  auto* sel = app.add_subcommand("selective", "retention table for a checkpoint");
  std::string sel_corpus, sel_out, sel_checkpoint, sel_split = "test";
  sel->add_option("--corpus", sel_corpus)->required();
  sel->add_option("--out", sel_out)->required();
  sel->add_option("--checkpoint", sel_checkpoint)->required();
  sel->add_option("--split", sel_split);

  // ------------------------------------------------------------------ report
  auto* rp = app.add_subcommand("report", "ablation table from evaluation reports");
  std::vector<std::string> rp_inputs;
  std::string rp_out;
  rp->add_option("--in", rp_inputs, "directories containing report.json")->required();
  rp->add_option("--out", rp_out, "output directory")->required();

  std::vector<std::string> argv_copy = args;
  try {
    std::vector<const char*> argv;
    argv.push_back("evireg");
    for (const std::string& a : argv_copy) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      const nlohmann::json cfg = load_config_file(gen_config);
      merge_option(cfg, "pages_per_codex", o_ppc, corpus_cfg.pages_per_codex);
      merge_option(cfg, "page_side", o_side, corpus_cfg.page_side);
      merge_option(cfg, "patch_size", o_patch, corpus_cfg.patch_size);
      merge_option(cfg, "stride", o_stride, corpus_cfg.stride);
      merge_option(cfg, "century_offset", o_coff, corpus_cfg.century_offset);
      merge_option(cfg, "dark_threshold", o_dark, corpus_cfg.dark_threshold);
      merge_option(cfg, "blank_fraction", o_blankf, corpus_cfg.blank_fraction);
      merge_option(cfg, "blur_threshold", o_blurt, corpus_cfg.blur_threshold);
      merge_option(cfg, "fading_exponent", o_fade, corpus_cfg.fading_exponent);
      merge_option(cfg, "seed", gen_seed_opt, gen_seed);
      corpus_cfg.seed = gen_seed;

      OutputDir out(gen_out);
      nlohmann::json echo;
      echo["command"] = "generate";
      echo["pages_per_codex"] = corpus_cfg.pages_per_codex;
      echo["page_side"] = corpus_cfg.page_side;
      echo["patch_size"] = corpus_cfg.patch_size;
      echo["stride"] = corpus_cfg.stride;
      echo["century_offset"] = corpus_cfg.century_offset;
      echo["dark_threshold"] = corpus_cfg.dark_threshold;
      echo["blank_fraction"] = corpus_cfg.blank_fraction;
      echo["blur_threshold"] = corpus_cfg.blur_threshold;
      echo["fading_exponent"] = corpus_cfg.fading_exponent;
      echo["seed"] = corpus_cfg.seed;
      out.echo_config(echo);

      const Corpus corpus = build_corpus(corpus_cfg);
      save_corpus(corpus, gen_out);
      std::size_t per_split[3] = {0, 0, 0};
      for (const PatchRef& ref : corpus.patches) {
        per_split[static_cast<int>(
            corpus.page_split[static_cast<std::size_t>(ref.page_index)])]++;
      }
      std::printf("generated %zu pages, %zu patches (train %zu / val %zu / test %zu)\n",
                  corpus.pages.size(), corpus.patches.size(), per_split[0], per_split[1],
                  per_split[2]);
      out.finish();
      return 0;
    }

    if (tr->parsed()) {
      const nlohmann::json cfg = load_config_file(tr_config);
      merge_option(cfg, "epochs", o_epochs, train_cfg.epochs);
      merge_option(cfg, "batch_size", o_bs, train_cfg.batch_size);
      merge_option(cfg, "lr", o_lr, train_cfg.lr);
      merge_option(cfg, "weight_decay", o_wd, train_cfg.weight_decay);
      merge_option(cfg, "lambda", o_lambda, train_cfg.lambda);
      merge_option(cfg, "ensemble", o_ens, ensemble_members);
      merge_option(cfg, "no_augment", o_noaug, no_augment);
      merge_option(cfg, "input_side", o_iside, ext_cfg.input_side);
      merge_option(cfg, "hidden", o_hidden, ext_cfg.hidden_widths);
      merge_option(cfg, "feature_dim", o_fdim, ext_cfg.feature_dim);
      merge_option(cfg, "dropout", o_drop, ext_cfg.dropout_rate);
      merge_option(cfg, "seed", tr_seed_opt, tr_seed);
      train_cfg.seed = tr_seed;
      train_cfg.augment = !no_augment;

      const Corpus corpus = load_corpus(tr_corpus);
      ModelConfig model_cfg;
      model_cfg.extractor = ext_cfg;
      model_cfg.kind = ensemble_members > 0 ? ModelKind::kPoint
                                            : model_kind_from_string(tr_model);
      if (model_cfg.kind == ModelKind::kClassifier) {
        model_cfg.class_labels = distinct_labels(corpus);
      }

      OutputDir out(tr_out);
      nlohmann::json echo;
      echo["command"] = "train";
      echo["corpus"] = tr_corpus;
      echo["model"] = to_string(model_cfg.kind);
      echo["epochs"] = train_cfg.epochs;
      echo["batch_size"] = train_cfg.batch_size;
      echo["lr"] = train_cfg.lr;
      echo["weight_decay"] = train_cfg.weight_decay;
      echo["lambda"] = train_cfg.lambda;
      echo["augment"] = train_cfg.augment;
      echo["seed"] = train_cfg.seed;
      echo["ensemble"] = ensemble_members;
      echo["input_side"] = ext_cfg.input_side;
      echo["hidden"] = ext_cfg.hidden_widths;
      echo["feature_dim"] = ext_cfg.feature_dim;
      echo["dropout"] = ext_cfg.dropout_rate;
      echo["class_labels"] = model_cfg.class_labels;
      out.echo_config(echo);

      const TrainMatrix train_set = make_train_matrix(corpus, Split::kTrain, model_cfg);
      const TrainMatrix val_set = make_train_matrix(corpus, Split::kVal, model_cfg);
      std::printf("model parameters: %zu\n", Model(model_cfg, 0).param_count());

      if (ensemble_members > 0) {
        std::vector<std::string> paths;
        std::vector<std::uint64_t> seeds;
        for (int m = 0; m < ensemble_members; ++m) {
          TrainConfig member_cfg = train_cfg;
          member_cfg.seed =
              Rng(train_cfg.seed).derive("ensemble-member", static_cast<std::uint64_t>(m)).next_u64();
          TrainResult res = train(train_set, val_set, model_cfg, member_cfg);
          char name[64];
          std::snprintf(name, sizeof name, "member_%d.txt", m);
          save_checkpoint(res.model, out.file(name));
          char hist[64];
          std::snprintf(hist, sizeof hist, "member_%d_history.csv", m);
          write_history_csv(res.history, out.file(hist));
          paths.push_back(name);
          seeds.push_back(member_cfg.seed);
          std::printf("member %d: best val MAE %.2fy (epoch %d)\n", m,
                      res.history.empty() ? 0.0 : res.model.epoch >= 0 ? res.history[static_cast<std::size_t>(res.model.epoch)].val_mae_years : 0.0,
                      res.model.epoch);
        }
        save_bundle_manifest(paths, seeds, out.file("bundle.json"));
      } else {
        TrainResult res = train(train_set, val_set, model_cfg, train_cfg);
        save_checkpoint(res.model, out.file("checkpoint.txt"));
        write_history_csv(res.history, out.file("history.csv"));
        if (!res.history.empty()) {
          std::printf("best val MAE %.2fy at epoch %d\n",
                      res.history[static_cast<std::size_t>(res.model.epoch)].val_mae_years,
                      res.model.epoch);
        }
      }
      out.finish();
      return 0;
    }

    if (ev->parsed()) {
      const Corpus corpus = load_corpus(ev_corpus);
      const Split split = split_from_name(ev_split);
      OutputDir out(ev_out);

      nlohmann::json echo;
      echo["command"] = "evaluate";
      echo["corpus"] = ev_corpus;
      echo["checkpoint"] = ev_checkpoint;
      echo["bundle"] = ev_bundle;
      echo["mc_dropout"] = ev_mc_passes;
      echo["split"] = ev_split;
      echo["seed"] = ev_seed;
      out.echo_config(echo);

      std::vector<PredictionRecord> records;
      std::string method;
      int passes = 1;
      if (!ev_bundle.empty()) {
        const EnsembleBundle bundle = load_bundle(ev_bundle);
        records = predict_records_ensemble(bundle, corpus, split);
        passes = static_cast<int>(bundle.members.size());
        method = "Deep Ensemble (" + std::to_string(passes) + "x)";
      } else if (ev_mc_passes > 0) {
        if (ev_checkpoint.empty()) {
          throw ConfigError("evaluate --mc-dropout requires --checkpoint");
        }
        const Model model = load_checkpoint(ev_checkpoint);
        records = predict_records_mc_dropout(model, corpus, split, ev_mc_passes, ev_seed);
        passes = ev_mc_passes;
        method = "MC Dropout (T=" + std::to_string(passes) + ")";
      } else {
        if (ev_checkpoint.empty()) {
          throw ConfigError("evaluate requires --checkpoint or --bundle");
        }
        const Model model = load_checkpoint(ev_checkpoint);
        records = predict_records(model, corpus, split);
        switch (model.config().kind) {
          case ModelKind::kEvidential: method = "Evidential"; break;
          case ModelKind::kPoint: method = "Point Regressor"; break;
          case ModelKind::kClassifier: method = "Classifier"; break;
        }
        if (ev_export_features) {
          export_features(model, corpus, split, out.file("features.csv"));
        }
        if (ev_spatial_page >= 0) {
          if (model.config().kind != ModelKind::kEvidential) {
            throw ConfigError("spatial maps require an evidential checkpoint");
          }
          const Page* page = nullptr;
          for (const Page& p : corpus.pages) {
            if (p.id == ev_spatial_page) page = &p;
          }
          if (page == nullptr) {
            throw ConfigError("no page with id " + std::to_string(ev_spatial_page));
          }
          const SpatialMaps maps = spatial_uncertainty_map(
              model, *page, corpus.config.patch_size, corpus.config.stride);
          write_matrix_csv(maps.aleatoric_std_years, out.file("spatial_aleatoric.csv"));
          write_matrix_csv(maps.epistemic_scale, out.file("spatial_epistemic.csv"));
        }
      }

      const EvalReport report = build_report(records, method, passes, codex_names(corpus));
      write_standard_outputs(report, records, out);
      std::printf("%s: MAE %.2fy", method.c_str(), report.mae_years);
      if (report.has_intervals) {
        std::printf(", PICP %.1f%%, MPIW %.1fy", 100.0 * report.picp90, report.mpiw_years);
      }
      std::printf("\n");
      out.finish();
      return 0;
    }

    if (dg->parsed()) {
      const Corpus corpus = load_corpus(dg_corpus);
      const Split split = split_from_name(dg_split);
      const Model model = load_checkpoint(dg_checkpoint);
      OutputDir out(dg_out);
      nlohmann::json echo;
      echo["command"] = "degrade-eval";
      echo["corpus"] = dg_corpus;
      echo["checkpoint"] = dg_checkpoint;
      echo["split"] = dg_split;
      out.echo_config(echo);

      std::vector<DegradationRow> rows;
      nlohmann::json jrows = nlohmann::json::array();
      for (const DegradationSpec& spec : default_degradations()) {
        const std::vector<PredictionRecord> records =
            predict_records(model, corpus, split, &spec);
        DegradationRow row;
        row.label = spec.label;
        row.mae_years = mae(records);
        double unc = 0.0;
        for (const auto& r : records) unc += r.total_std_years;
        row.mean_std_years = unc / static_cast<double>(records.size());
        rows.push_back(row);
        jrows.push_back({{"degradation", row.label},
                         {"mae_years", row.mae_years},
                         {"mean_uncertainty_years", row.mean_std_years}});
        std::printf("%-18s MAE %7.2fy   mean unc %7.2fy\n", row.label.c_str(),
                    row.mae_years, row.mean_std_years);
      }
      write_degradation_csv(rows, out.file("degradation.csv"));
      {
        nlohmann::json j;
        j["format_version"] = 1;
        j["rows"] = jrows;
        std::ofstream js(out.file("degradation.json"));
        js << j.dump(2) << "\n";
      }
      out.finish();
      return 0;
    }

    if (sel->parsed()) {
      const Corpus corpus = load_corpus(sel_corpus);
      const Split split = split_from_name(sel_split);
      const Model model = load_checkpoint(sel_checkpoint);
      OutputDir out(sel_out);
      nlohmann::json echo;
      echo["command"] = "selective";
      echo["corpus"] = sel_corpus;
      echo["checkpoint"] = sel_checkpoint;
      echo["split"] = sel_split;
      out.echo_config(echo);

      const std::vector<PredictionRecord> records = predict_records(model, corpus, split);
      const EvalReport report =
          build_report(records, "Evidential", 1, codex_names(corpus));
      write_selective_csv(report, out.file("selective.csv"));
      for (const SelectiveRow& row : report.selective) {
        std::printf("retain %4.0f%%: MAE %6.2fy  mean unc %6.2fy\n", 100.0 * row.fraction,
                    row.mae_years, row.mean_uncertainty_years);
      }
      out.finish();
      return 0;
    }

    if (rp->parsed()) {
      OutputDir out(rp_out);
      nlohmann::json echo;
      echo["command"] = "report";
      echo["in"] = rp_inputs;
      out.echo_config(echo);

      std::vector<EvalReport> reports;
      for (const std::string& dir : rp_inputs) {
        reports.push_back(read_report_json((fs::path(dir) / "report.json").string()));
      }
      // Table-1 row order.
      auto rank = [](const EvalReport& r) {
        if (r.method.rfind("Classifier", 0) == 0) return 0;
        if (r.method.rfind("Point Regressor", 0) == 0) return 1;
        if (r.method.rfind("MC Dropout", 0) == 0) return 2;
        if (r.method.rfind("Deep Ensemble", 0) == 0) return 3;
        if (r.method.rfind("Evidential", 0) == 0) return 4;
        return 5;
      };
      std::stable_sort(reports.begin(), reports.end(),
                       [&](const EvalReport& a, const EvalReport& b) {
                         return rank(a) < rank(b);
                       });

      std::ofstream table(out.file("ablation.txt"));
      nlohmann::json jrows = nlohmann::json::array();
      char buf[256];
      const char* header = "Model                     MAE      PICP     MPIW    Spearman   Passes\n";
      table << header;
      std::printf("%s", header);
      for (const EvalReport& r : reports) {
        char picp_s[16] = "---", mpiw_s[16] = "---", rho_s[16] = "---";
        if (r.has_intervals) {
          std::snprintf(picp_s, sizeof picp_s, "%.1f%%", 100.0 * r.picp90);
          std::snprintf(mpiw_s, sizeof mpiw_s, "%.1fy", r.mpiw_years);
        }
        if (r.has_uncertainty && r.spearman_total.defined) {
          std::snprintf(rho_s, sizeof rho_s, "%.3f", r.spearman_total.rho);
        }
        std::snprintf(buf, sizeof buf, "%-24s %6.1fy  %-8s %-7s %-10s %d\n",
                      r.method.c_str(), r.mae_years, picp_s, mpiw_s, rho_s, r.passes);
        table << buf;
        std::printf("%s", buf);
        nlohmann::json jr;
        jr["method"] = r.method;
        jr["mae_years"] = r.mae_years;
        jr["passes"] = r.passes;
        if (r.has_intervals) {
          jr["picp90"] = r.picp90;
          jr["mpiw_years"] = r.mpiw_years;
        }
        if (r.has_uncertainty && r.spearman_total.defined) {
          jr["spearman_total"] = r.spearman_total.rho;
        }
        jrows.push_back(jr);
      }
      nlohmann::json j;
      j["format_version"] = 1;
      j["rows"] = jrows;
      std::ofstream js(out.file("ablation.json"));
      js << j.dump(2) << "\n";
      out.finish();
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace evireg
