// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// The CLI verbs. Each takes a validated config and an experiment
// directory:
//
//   <out>/config.json          snapshot, written before any training
//   <out>/datasets/<split>/    images, annotations, sidecars, meta
//   <out>/datasets/manifest.json
//   <out>/checkpoints/
//   <out>/metrics.log          adaptation, one JSON record per iteration
//   <out>/pretrain_metrics.log
//   <out>/reports/
//   <out>/curves/

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftdet/cli/config.hpp"
#include "shiftdet/cli/plot.hpp"
#include "shiftdet/core/errors.hpp"
#include "shiftdet/detector/checkpoint.hpp"
#include "shiftdet/domain/dataset.hpp"
#include "shiftdet/domain/dataset_io.hpp"
#include "shiftdet/eval/curves.hpp"
#include "shiftdet/eval/evaluate.hpp"
#include "shiftdet/eval/experiment.hpp"
#include "shiftdet/training/trainer.hpp"

namespace shiftdet {

namespace fs = std::filesystem;

struct CommandOptions {
  bool force = false;
  bool dry_run = false;
  std::ostream* out = &std::cout;
  // pretrain / adapt
  std::optional<fs::path> init_checkpoint;
  bool resume = false;
  // Stop once this many total iterations are done (checkpointing first).
  std::optional<int> stop_at;
  // eval
  std::optional<fs::path> checkpoint;
  std::string split = "target_test";
  std::string which = "teacher";
  // curves
  std::optional<fs::path> log_path;
};

class ExperimentDir {
 public:
  explicit ExperimentDir(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path config() const { return root_ / "config.json"; }
  fs::path datasets() const { return root_ / "datasets"; }
  fs::path split(const std::string& name) const { return datasets() / name; }
  fs::path manifest() const { return datasets() / "manifest.json"; }
  fs::path checkpoints() const { return root_ / "checkpoints"; }
  fs::path pretrain_checkpoint() const { return checkpoints() / "pretrain.ckpt"; }
  fs::path adapt_latest() const { return checkpoints() / "adapt_latest.ckpt"; }
  fs::path adapt_final() const { return checkpoints() / "adapt_final.ckpt"; }
  fs::path metrics_log() const { return root_ / "metrics.log"; }
  fs::path pretrain_log() const { return root_ / "pretrain_metrics.log"; }
  fs::path timing_log() const { return root_ / "timing.log"; }
  fs::path reports() const { return root_ / "reports"; }
  fs::path curves() const { return root_ / "curves"; }

  // The snapshot never changes once written; a different config needs a
  // new directory (or --force).
  void write_config_snapshot(const ExperimentConfig& cfg, bool force) const {
    const std::string text = config_to_json(cfg).dump(2) + "\n";
    if (fs::exists(config()) && !force) {
      std::ifstream in(config());
      const std::string existing((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (existing != text)
        throw ConfigError("config differs from the snapshot in " + config().string() + " (use a new --out or --force)");
      return;
    }
    fs::create_directories(root_);
    write_text(config(), text);
  }

  static void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw DataError("cannot write " + path.string());
      f << text;
    }
    fs::rename(tmp, path);
  }

 private:
  fs::path root_;
};

inline const std::vector<std::string>& known_splits() {
  static const std::vector<std::string> names{"source_train", "target_train", "source_test", "target_test",
                                              "third_test"};
  return names;
}

namespace detail {

inline Dataset load_split(const ExperimentDir& dir, const std::string& name, bool with_sidecar) {
  const fs::path p = dir.split(name);
  if (!fs::exists(p / kMetaFile)) throw DataError("split " + name + " not found under " + dir.datasets().string());
  Dataset ds = load_dataset(p);
  if (with_sidecar && fs::exists(p / kSidecarFile)) ds = attach_labels(std::move(ds), load_sidecar(p));
  return ds;
}

inline void write_metrics(const fs::path& path, const std::vector<IterationMetrics>& log) {
  std::ostringstream os;
  for (const auto& m : log) write_metrics_line(os, m);
  ExperimentDir::write_text(path, os.str());
}

inline void write_curve_pair(const fs::path& dir, const std::string& stem, const CurveTable& t,
                             const std::string& title, const std::string& y_label) {
  ExperimentDir::write_text(dir / (stem + ".csv"), curves_to_csv(t));
  ExperimentDir::write_text(dir / (stem + ".svg"), svg_line_plot(t, title, y_label));
}

// Truncates a JSONL log to its first n records.
inline void truncate_log(const fs::path& path, std::size_t n) {
  std::vector<std::string> keep;
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (keep.size() < n && std::getline(in, line)) keep.push_back(line);
  }
  if (keep.size() != n) throw DataError("metrics log " + path.string() + " is shorter than the checkpoint");
  std::string text;
  for (const auto& l : keep) text += l + "\n";
  ExperimentDir::write_text(path, text);
}

}  // namespace detail

inline int cmd_gen_data(const ExperimentConfig& cfg, const ExperimentDir& dir, const CommandOptions& opt) {
  if (fs::exists(dir.datasets()) && !fs::is_empty(dir.datasets()) && !opt.force)
    throw ConfigError(dir.datasets().string() + " is not empty (use --force to overwrite)");
  if (opt.dry_run) {
    *opt.out << "gen-data: would write " << cfg.sizes.n_source << "/" << cfg.sizes.n_target << "/" << cfg.sizes.n_test
             << " images to " << dir.datasets() << "\n";
    return 0;
  }
  dir.write_config_snapshot(cfg, opt.force);
  if (fs::exists(dir.datasets())) fs::remove_all(dir.datasets());
  const ExperimentData data = build_experiment(cfg.scene, cfg.sizes);
  nlohmann::json manifest{{"schema_version", kConfigSchemaVersion}, {"splits", nlohmann::json::object()}};
  auto save = [&](const Dataset& ds, LabelPlacement placement) {
    save_dataset(ds, dir.split(ds.name), placement);
    manifest["splits"][ds.name] = {{"count", ds.items.size()},
                                   {"fingerprint", dataset_fingerprint(ds)},
                                   {"style", ds.style},
                                   {"domain", domain_value(ds.domain)},
                                   {"labels", placement == LabelPlacement::kSidecar ? "sidecar" : "inline"}};
    *opt.out << "wrote " << ds.name << " (" << ds.items.size() << " images, " << ds.style << ")\n";
  };
  save(data.source_train, LabelPlacement::kInline);
  // Target-train labels exist only for analysis and the oracle row.
  save(data.target_train, LabelPlacement::kSidecar);
  save(data.source_test, LabelPlacement::kInline);
  save(data.target_test, LabelPlacement::kInline);
  if (data.third_test) save(*data.third_test, LabelPlacement::kInline);
  ExperimentDir::write_text(dir.manifest(), manifest.dump(2) + "\n");
  return 0;
}

inline int cmd_pretrain(const ExperimentConfig& cfg, const ExperimentDir& dir, const CommandOptions& opt) {
  const Dataset source = detail::load_split(dir, "source_train", false);
  const Detector<float> det(cfg.setup.detector);
  if (opt.dry_run) {
    *opt.out << "pretrain: " << cfg.setup.train.burn_in_iterations << " iterations on " << source.items.size()
             << " source images\n";
    return 0;
  }
  dir.write_config_snapshot(cfg, opt.force);
  AccessAudit audit;
  const LabeledPool pool(source, &audit);
  PretrainState st = start_pretrain(det, cfg.setup.train.seed);
  std::ofstream log(dir.pretrain_log(), std::ios::trunc);
  RunHooks<PretrainState> hooks;
  hooks.after_iteration = [&](const PretrainState&, const IterationMetrics& m) { write_metrics_line(log, m); };
  pretrain(det, cfg.setup.train, cfg.setup.weak, cfg.setup.strong, pool, st, cfg.setup.train.burn_in_iterations,
           hooks);
  log.close();
  save_archive(dir.pretrain_checkpoint(), pretrain_archive(det, st));
  const auto eval = evaluate_detector(det, st.params, source, cfg.setup.eval);
  *opt.out << "pretrain: " << st.iteration << " iterations, source-train mAP " << eval.map << "\n";
  return 0;
}

inline int cmd_adapt(const ExperimentConfig& cfg, const ExperimentDir& dir, const CommandOptions& opt) {
  const Dataset source = detail::load_split(dir, "source_train", false);
  const Dataset target_train = detail::load_split(dir, "target_train", false);
  const Dataset target_test = detail::load_split(dir, "target_test", false);
  const AdaptiveTrainer trainer(cfg.setup.detector, cfg.setup.discriminator, cfg.setup.train, cfg.setup.weak,
                                cfg.setup.strong);
  const fs::path init_path = opt.init_checkpoint.value_or(dir.pretrain_checkpoint());

  TrainerState st;
  const bool resuming = opt.resume && fs::exists(dir.adapt_latest());
  if (resuming) {
    st = trainer.from_archive(load_archive<float>(dir.adapt_latest()));
  } else {
    const auto init = pretrain_from_archive(trainer.detector(), load_archive<float>(init_path));
    st = trainer.start(init.params);
  }
  if (opt.dry_run) {
    *opt.out << "adapt: " << (resuming ? "resume at " + std::to_string(st.iteration) : "start from " + init_path.string())
             << ", " << cfg.setup.train.adapt_iterations << " iterations\n";
    return 0;
  }
  dir.write_config_snapshot(cfg, opt.force);
  if (resuming) {
    detail::truncate_log(dir.metrics_log(), static_cast<std::size_t>(st.iteration));
  } else {
    ExperimentDir::write_text(dir.metrics_log(), "");
  }
  AccessAudit audit;
  const LabeledPool src_pool(source, &audit);
  const UnlabeledPool tgt_pool(target_train, &audit);
  std::ofstream log(dir.metrics_log(), std::ios::app);
  std::ofstream timing(dir.timing_log(), resuming ? std::ios::app : std::ios::trunc);

  // Trimmed copy so that stop_at can interrupt the run.
  TrainConfig run_cfg = cfg.setup.train;
  if (opt.stop_at) run_cfg.adapt_iterations = std::min(run_cfg.adapt_iterations, *opt.stop_at);
  const AdaptiveTrainer runner(cfg.setup.detector, cfg.setup.discriminator, run_cfg, cfg.setup.weak,
                               cfg.setup.strong);
  RunHooks<TrainerState> hooks;
  hooks.eval_every = cfg.setup.eval_every;
  hooks.evaluate = [&](const ParamSet<float>& p) {
    return evaluate_detector(trainer.detector(), p, target_test, cfg.setup.eval).map;
  };
  hooks.after_iteration = [&](const TrainerState& s, const IterationMetrics& m) {
    write_metrics_line(log, m);
    timing << m.iteration << ' ' << m.wall_ms << '\n';
    if (cfg.checkpoint_every > 0 && s.iteration % cfg.checkpoint_every == 0) {
      log.flush();
      save_archive(dir.adapt_latest(), trainer.to_archive(s));
    }
  };
  runner.adapt(st, src_pool, tgt_pool, hooks);
  log.close();
  save_archive(dir.adapt_latest(), trainer.to_archive(st));
  if (st.iteration >= cfg.setup.train.adapt_iterations) save_archive(dir.adapt_final(), trainer.to_archive(st));
  if (audit.label_reads(target_train.name) != 0) throw std::logic_error("adaptation read target-train labels");
  const auto eval = evaluate_detector(trainer.detector(), trainer.reported_model(st), target_test, cfg.setup.eval);
  *opt.out << "adapt: " << st.iteration << " iterations, target-test mAP " << eval.map << "\n";
  return 0;
}

inline int cmd_eval(const ExperimentConfig& cfg, const ExperimentDir& dir, const CommandOptions& opt) {
  const auto& names = known_splits();
  if (std::find(names.begin(), names.end(), opt.split) == names.end())
    throw ConfigError("unknown split '" + opt.split + "'");
  if (opt.which != "teacher" && opt.which != "student") throw ConfigError("--which must be teacher or student");
  // Evaluation is a declared label reader, including the target-train sidecar.
  const Dataset data = detail::load_split(dir, opt.split, true);
  const fs::path ckpt = opt.checkpoint.value_or(dir.adapt_final());
  const auto ar = load_archive<float>(ckpt);
  const AdaptiveTrainer trainer(cfg.setup.detector, cfg.setup.discriminator, cfg.setup.train);
  ParamSet<float> params;
  if (ar.meta.value("kind", "") == "pretrain") {
    params = pretrain_from_archive(trainer.detector(), ar).params;
  } else {
    const auto st = trainer.from_archive(ar);
    params = opt.which == "teacher" ? trainer.reported_model(st) : st.student;
  }
  if (opt.dry_run) return 0;
  const auto result = evaluate_detector(trainer.detector(), params, data, cfg.setup.eval);
  auto j = eval_to_json(result);
  j["checkpoint"] = ckpt.string();
  j["which"] = opt.which;
  ExperimentDir::write_text(dir.reports() / ("eval_" + opt.split + "_" + opt.which + ".json"), j.dump(2) + "\n");
  *opt.out << opt.split << " " << opt.which << " mAP " << result.map << " (fingerprint " << result.split_fingerprint
           << ")\n";
  for (const auto& w : result.warnings) *opt.out << "warning: " << w << "\n";
  return 0;
}

inline int cmd_ablate(const ExperimentConfig& cfg, const ExperimentDir& dir, const CommandOptions& opt) {
  ExperimentData data;
  data.source_train = detail::load_split(dir, "source_train", false);
  data.target_train = detail::load_split(dir, "target_train", true);
  data.source_test = detail::load_split(dir, "source_test", false);
  data.target_test = detail::load_split(dir, "target_test", false);
  if (opt.dry_run) {
    *opt.out << "ablate: " << cfg.ablation.rows.size() + cfg.ablation.lambda_sweep.size() << " rows\n";
    return 0;
  }
  dir.write_config_snapshot(cfg, opt.force);
  AccessAudit audit;
  const auto report = run_ablations(cfg.setup, data, cfg.ablation, &audit, [&](const std::string& row, const IterationMetrics& m) {
    if ((m.iteration + 1) % 500 == 0) *opt.out << row << ": " << m.iteration + 1 << " iterations\n" << std::flush;
  });
  auto j = report_to_json(report);
  j["audit"] = {{"target_train_label_reads", audit.label_reads(data.target_train.name)},
                {"target_train_analysis_reads", audit.analysis_reads(data.target_train.name)}};
  ExperimentDir::write_text(dir.reports() / "ablation.json", j.dump(2) + "\n");
  const std::string table = report_table(report, cfg.setup.detector.num_classes);
  ExperimentDir::write_text(dir.reports() / "ablation.txt", table);
  *opt.out << table;

  std::map<std::string, const std::vector<IterationMetrics>*> sweep, variants;
  for (const auto& row : report.rows) {
    detail::write_curve_pair(dir.curves(), row.name + "_map", eval_curves(row.log), row.name, "mAP");
    ExperimentDir::write_text(dir.curves() / (row.name + "_loss.csv"), curves_to_csv(loss_curves(row.log)));
    if (row.name.rfind("lambda_dis=", 0) == 0) sweep[row.name] = &row.log;
    else variants[row.name] = &row.log;
  }
  detail::write_curve_pair(dir.curves(), "lambda_sweep_map", merge_runs(sweep, reported_map), "lambda_dis sweep",
                           "target-test mAP");
  detail::write_curve_pair(dir.curves(), "lambda_sweep_fp", merge_runs(sweep, fp_ratio_of), "lambda_dis sweep",
                           "pseudo-label FP ratio");
  detail::write_curve_pair(dir.curves(), "variants_map", merge_runs(variants, reported_map), "variants",
                           "target-test mAP");
  detail::write_curve_pair(dir.curves(), "variants_fp", merge_runs(variants, fp_ratio_of), "variants",
                           "pseudo-label FP ratio");
  for (const auto& row : report.rows)
    if (!row.ok()) return 3;
  return 0;
}

inline int cmd_curves(const ExperimentConfig&, const ExperimentDir& dir, const CommandOptions& opt) {
  const fs::path path = opt.log_path.value_or(dir.metrics_log());
  const auto log = read_metrics_log(path);
  if (opt.dry_run) return 0;
  const auto stem = path.stem().string();
  detail::write_curve_pair(dir.curves(), stem + "_loss", loss_curves(log), stem, "loss");
  detail::write_curve_pair(dir.curves(), stem + "_map", eval_curves(log), stem, "mAP");
  *opt.out << "curves: " << log.size() << " records from " << path << "\n";
  return 0;
}

}  // namespace shiftdet
