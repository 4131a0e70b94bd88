// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Variant grid over one dataset: baselines, the full method, ablations and
// the lambda_dis sweep, all from one shared burn-in. Also the unseen-domain
// protocol.

#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftdet/adversary/discriminator.hpp"
#include "shiftdet/augmentation.hpp"
#include "shiftdet/domain/dataset.hpp"
#include "shiftdet/domain/dataset_io.hpp"
#include "shiftdet/eval/evaluate.hpp"
#include "shiftdet/training/trainer.hpp"

namespace shiftdet {

struct ExperimentSetup {
  DetectorConfig detector;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  WeakAugConfig weak;
  StrongAugConfig strong;
  EvalSettings eval;
  int eval_every = 100;
};

inline constexpr const char* kRowSourceOnly = "source_only";
inline constexpr const char* kRowOracle = "oracle";
inline constexpr const char* kRowFull = "full_AT";
inline constexpr const char* kRowNoDis = "no_dis";
inline constexpr const char* kRowNoWsAug = "no_ws_aug";
inline constexpr const char* kRowNoMutual = "no_mutual";

inline std::string sweep_row_name(double lambda_dis) {
  std::ostringstream os;
  os << "lambda_dis=" << lambda_dis;
  return os.str();
}

struct AblationSettings {
  // Rows to run; sweep points are added from lambda_sweep.
  std::vector<std::string> rows{kRowSourceOnly, kRowOracle, kRowFull, kRowNoDis, kRowNoWsAug, kRowNoMutual};
  std::vector<double> lambda_sweep{0.0, 0.05, 0.1};
  // Track the pseudo-label FP ratio against target-train labels.
  bool probe_pseudo_labels = true;
};

struct AblationRow {
  std::string name;
  std::optional<EvalResult> reported;  // teacher for adaptation rows
  std::optional<EvalResult> student;
  std::vector<IterationMetrics> log;
  std::string error;
  bool ok() const { return error.empty() && reported.has_value(); }
};

struct AblationReport {
  std::string target_test_fingerprint;
  std::vector<AblationRow> rows;

  const AblationRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
};

// Progress callback: (row name, metrics). Lets the caller stream logs.
using RowMetricsSink = std::function<void(const std::string&, const IterationMetrics&)>;

namespace detail {

inline TrainConfig row_config(const TrainConfig& base, const std::string& row) {
  TrainConfig c = base;
  if (row == kRowNoDis) c.disable_dis = true;
  if (row == kRowNoWsAug) c.disable_ws_aug = true;
  if (row == kRowNoMutual) c.disable_mutual = true;
  if (row.rfind("lambda_dis=", 0) == 0) c.lambda_dis = std::stod(row.substr(11));
  return c;
}

}  // namespace detail

// Supervised run on one labeled split for burn-in + adaptation iterations,
// with a copy of the parameters taken once the burn-in is done.
struct SupervisedRun {
  ParamSet<float> burn_in;
  ParamSet<float> final;
  std::vector<IterationMetrics> log;
};

inline SupervisedRun run_supervised(const ExperimentSetup& s, const LabeledPool& pool, const Dataset& eval_split,
                                    const std::string& row, const RowMetricsSink& sink) {
  const Detector<float> det(s.detector);
  auto st = start_pretrain(det, s.train.seed);
  SupervisedRun out;
  if (s.train.burn_in_iterations == 0) out.burn_in = st.params;
  RunHooks<PretrainState> hooks;
  hooks.eval_every = s.eval_every;
  hooks.evaluate = [&](const ParamSet<float>& p) { return evaluate_detector(det, p, eval_split, s.eval).map; };
  hooks.after_iteration = [&](const PretrainState& cur, const IterationMetrics& m) {
    if (cur.iteration == s.train.burn_in_iterations) out.burn_in = cur.params;
    if (sink) sink(row, m);
  };
  out.log = pretrain(det, s.train, s.weak, s.strong, pool, st, s.train.burn_in_iterations + s.train.adapt_iterations,
                     hooks);
  out.final = st.params;
  return out;
}

struct AdaptRun {
  TrainerState state;
  std::vector<IterationMetrics> log;
};

inline AdaptRun run_adaptation(const ExperimentSetup& s, const TrainConfig& cfg, const ParamSet<float>& init,
                               const LabeledPool& source, const UnlabeledPool& target, const Dataset& eval_split,
                               const PseudoLabelProbe* probe, const std::string& row, const RowMetricsSink& sink) {
  const AdaptiveTrainer trainer(s.detector, s.discriminator, cfg, s.weak, s.strong);
  AdaptRun out{trainer.start(init), {}};
  RunHooks<TrainerState> hooks;
  hooks.eval_every = s.eval_every;
  hooks.evaluate = [&](const ParamSet<float>& p) {
    return evaluate_detector(trainer.detector(), p, eval_split, s.eval).map;
  };
  if (sink) hooks.after_iteration = [&](const TrainerState&, const IterationMetrics& m) { sink(row, m); };
  out.log = trainer.adapt(out.state, source, target, hooks, probe);
  return out;
}

// Every row uses the same seed, the same splits and (for adaptation rows)
// the same burn-in weights. A failing row is recorded and the rest go on.
inline AblationReport run_ablations(const ExperimentSetup& s, const ExperimentData& data,
                                    const AblationSettings& settings, AccessAudit* audit,
                                    const RowMetricsSink& sink = {}) {
  AblationReport report;
  report.target_test_fingerprint = dataset_fingerprint(data.target_test);
  const Detector<float> det(s.detector);
  const LabeledPool source(data.source_train, audit);
  const UnlabeledPool target(data.target_train, audit);
  std::optional<PseudoLabelProbe> probe;
  if (settings.probe_pseudo_labels) probe.emplace(data.target_train, audit);

  std::vector<std::string> rows = settings.rows;
  for (double l : settings.lambda_sweep) rows.push_back(sweep_row_name(l));

  auto evaluate = [&](AblationRow& r, const ParamSet<float>& reported, const ParamSet<float>* student) {
    r.reported = evaluate_detector(det, reported, data.target_test, s.eval);
    if (student) r.student = evaluate_detector(det, *student, data.target_test, s.eval);
  };

  // The source run doubles as the burn-in for every adaptation row.
  std::optional<SupervisedRun> source_run;
  std::string source_error;
  try {
    source_run = run_supervised(s, source, data.target_test, kRowSourceOnly, sink);
  } catch (const std::exception& e) {
    source_error = e.what();
  }

  for (const auto& name : rows) {
    AblationRow row;
    row.name = name;
    try {
      if (name == kRowSourceOnly) {
        if (!source_run) throw std::runtime_error(source_error);
        evaluate(row, source_run->final, nullptr);
        row.log = source_run->log;
      } else if (name == kRowOracle) {
        // Declared access: the oracle trains on target-train labels.
        const LabeledPool labeled_target(data.target_train, audit);
        auto run = run_supervised(s, labeled_target, data.target_test, name, sink);
        evaluate(row, run.final, nullptr);
        row.log = std::move(run.log);
      } else {
        if (!source_run) throw std::runtime_error("burn-in failed: " + source_error);
        const TrainConfig cfg = detail::row_config(s.train, name);
        auto run = run_adaptation(s, cfg, source_run->burn_in, source, target, data.target_test,
                                  probe ? &*probe : nullptr, name, sink);
        const AdaptiveTrainer view(s.detector, s.discriminator, cfg, s.weak, s.strong);
        evaluate(row, view.reported_model(run.state), &run.state.student);
        row.log = std::move(run.log);
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline nlohmann::json report_to_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"name", row.name}};
    if (row.reported) j["reported"] = eval_to_json(*row.reported);
    if (row.student) j["student"] = eval_to_json(*row.student);
    if (!row.error.empty()) j["error"] = row.error;
    j["iterations"] = row.log.size();
    rows.push_back(j);
  }
  return {{"target_test_fingerprint", r.target_test_fingerprint}, {"rows", rows}};
}

inline std::string report_table(const AblationReport& r, int num_classes) {
  std::ostringstream os;
  char buf[64];
  os << "target-test split " << r.target_test_fingerprint << "\n";
  os << "row                 mAP    ";
  for (int c = 0; c < num_classes; ++c) os << " AP" << c << "   ";
  os << " student\n";
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-18s", row.name.c_str());
    os << buf;
    if (!row.ok()) {
      os << "  failed: " << row.error << "\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "  %.3f ", row.reported->map);
    os << buf;
    for (const auto& ap : row.reported->per_class_ap) {
      if (ap) std::snprintf(buf, sizeof buf, "  %.3f", *ap);
      else std::snprintf(buf, sizeof buf, "    n/a");
      os << buf;
    }
    if (row.student) std::snprintf(buf, sizeof buf, "   %.3f", row.student->map), os << buf;
    os << "\n";
  }
  return os.str();
}

struct GeneralizationResult {
  EvalResult adapted;      // teacher after adapting to domain A, scored on B
  EvalResult source_only;  // same burn-in budget, source labels only
};

// Train on source labels plus unlabeled domain A; score on domain B, which
// the trainer never reads.
inline GeneralizationResult domain_generalization_eval(const ExperimentSetup& s, const Dataset& source_train,
                                                       const Dataset& target_a, const Dataset& target_b,
                                                       AccessAudit* audit) {
  if (target_a.style == target_b.style || target_b.style == source_train.style)
    throw ConfigError("generalization needs three distinct domains, got " + source_train.style + ", " +
                      target_a.style + ", " + target_b.style);
  if (target_a.name == target_b.name) throw ConfigError("unseen split must differ from the adaptation split");
  const Detector<float> det(s.detector);
  const LabeledPool source(source_train, audit);
  const UnlabeledPool target(target_a, audit);
  ExperimentSetup quiet = s;
  quiet.eval_every = 0;
  auto base = run_supervised(quiet, source, target_b, kRowSourceOnly, {});
  auto run = run_adaptation(quiet, s.train, base.burn_in, source, target, target_b, nullptr, kRowFull, {});
  if (audit && audit->touched(target_b.name)) throw std::logic_error("unseen domain was read during training");
  const AdaptiveTrainer view(s.detector, s.discriminator, s.train, s.weak, s.strong);
  return {evaluate_detector(det, view.reported_model(run.state), target_b, s.eval),
          evaluate_detector(det, base.final, target_b, s.eval)};
}

}  // namespace shiftdet
