// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
//
//   acceptance --out DIR [--only 1,2,...]
//
// Criteria 6, 7-11 write their runs and reports under DIR.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shiftdet/cli/commands.hpp"
#include "support/micro.hpp"
#include "support/oracles.hpp"

namespace shiftdet {
namespace {

namespace fs = std::filesystem;

// Pinned tolerances and thresholds.
constexpr double kFdRelTolerance = 1e-3;
constexpr double kFdBudgetSeconds = 120.0;
constexpr std::size_t kMicroMaxParams = 5000;
constexpr double kEmaUlps = 4.0;
constexpr int kEmaAuditIterations = 100;
constexpr int kPseudoLabelSets = 1000;
constexpr int kApInstances = 25;
constexpr double kApTolerance = 1e-12;
constexpr double kTotalLossTolerance = 1e-6;
constexpr int kDecompositionIterations = 500;
constexpr int kResumeStop = 250;
constexpr double kMinGain = 0.05;
constexpr double kFogBudgetMinutes = 45.0;
constexpr double kFinalWindow = 0.2;
constexpr int kSeedsNeeded = 2;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient checks

Verdict gradient_checks() {
  const auto t0 = Clock::now();
  const Detector<double> det(DetectorConfig::micro());
  const std::size_t n_params = testing::micro_params(det, 1).total_size();
  const testing::AdversarialMicro adv(1);
  const std::size_t n_adv = adv.theta.total_size() + adv.phi.total_size();

  struct Suite {
    const char* name;
    std::vector<testing::GroupCheck> checks;
  };
  std::vector<Suite> suites;
  for (std::uint64_t seed : {1, 2}) {
    suites.push_back({"L_sup", testing::check_supervised_gradient(seed)});
    suites.push_back({"L_sup(batch)", testing::check_supervised_batch_gradient(seed)});
    suites.push_back({"L_unsup", testing::check_unsupervised_gradient(seed)});
    suites.push_back({"L_unsup(proposals)", testing::check_unsupervised_gradient_with_proposals(seed)});
    suites.push_back({"L_dis", testing::check_adversarial_gradient(seed)});
  }
  const double elapsed = seconds_since(t0);

  bool ok = n_params <= kMicroMaxParams && n_adv <= kMicroMaxParams && elapsed < kFdBudgetSeconds;
  double worst = 0.0;
  std::string worst_where;
  std::size_t checked = 0, one_sided = 0, excluded = 0, groups = 0;
  for (const auto& s : suites) {
    for (const auto& c : s.checks) {
      ++groups;
      checked += c.checked, one_sided += c.one_sided, excluded += c.excluded;
      if (c.rel_error > worst) worst = c.rel_error, worst_where = std::string(s.name) + "/" + c.group;
      ok = ok && c.rel_error < kFdRelTolerance && c.checked > 0 && testing::kink_share_ok(c);
    }
  }
  std::ostringstream d;
  d << groups << " groups, max rel " << fmt("%.2e", worst) << " (" << worst_where << "), " << checked
    << " coords checked (" << one_sided << " one-sided, " << excluded << " skipped at kinks), params " << n_params
    << "/" << n_adv << ", " << fmt("%.1f", elapsed) << " s";
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 2. Gradient reversal

Verdict gradient_reversal() {
  bool ok = true;
  std::size_t compared = 0;
  Rng rng{99};
  Tensor<double> x(3, 4, 4);
  for (auto& v : x.data) v = rng.normal();
  const auto& y = grl_forward(x);
  ok = ok && &y == &x && y == x;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const testing::AdversarialMicro m(seed);
    const auto reversed = m.gradients(GrlSpec{1.0}).first;
    const auto plain = m.unreversed_encoder_gradient();
    double norm = 0.0;
    for (std::size_t a : m.det.encoder_parameters()) {
      for (std::size_t k = 0; k < plain[a].size(); ++k) {
        ok = ok && reversed[a].values[k] == -plain[a].values[k];
        norm += plain[a].values[k] * plain[a].values[k];
        ++compared;
      }
    }
    ok = ok && norm > 0.0;
  }
  return {ok, "forward identity, " + std::to_string(compared) + " encoder entries bitwise negated over 10 models"};
}

// ---------------------------------------------------------------------------
// 3. EMA

Verdict ema_exactness() {
  bool ok = true;
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double worst_ulps = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    ParamSet<double> t, s;
    t.add("a", {7}), t.add("b", {3, 2});
    s.add("a", {7}), s.add("b", {3, 2});
    for (std::size_t i = 0; i < t.count(); ++i)
      for (std::size_t k = 0; k < t[i].size(); ++k) t[i].values[k] = nd(g), s[i].values[k] = nd(g);
    const double alpha = trial == 0 ? 0.996 : ud(g);
    auto updated = t;
    ema_update(updated, s, alpha);
    for (std::size_t i = 0; i < t.count(); ++i) {
      for (std::size_t k = 0; k < t[i].size(); ++k) {
        const long double ref = static_cast<long double>(alpha) * t[i].values[k] +
                                (1.0L - static_cast<long double>(alpha)) * s[i].values[k];
        const double scale = std::max(std::abs(t[i].values[k]), std::abs(s[i].values[k]));
        const double ulps = std::abs(static_cast<double>(updated[i].values[k] - ref)) /
                            (std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300));
        worst_ulps = std::max(worst_ulps, ulps);
      }
    }
    auto fixed = s;
    ema_update(fixed, s, alpha);
    ok = ok && fixed == s;
  }
  ok = ok && worst_ulps <= kEmaUlps;

  // Audited run: each teacher must equal ema(previous teacher, new student)
  // bit for bit, so nothing else (no gradient) can have reached it.
  const auto data = build_experiment(testing::micro_scene(), ExperimentSizes{12, 12, 6, false});
  TrainConfig cfg;
  cfg.batch_source = 2, cfg.batch_target = 2, cfg.burn_in_iterations = 0;
  cfg.adapt_iterations = kEmaAuditIterations, cfg.confidence_threshold = 0.05f, cfg.lr = 0.02;
  const DetectorConfig dc = DetectorConfig::micro();
  const AdaptiveTrainer tr(dc, DiscriminatorConfig{dc.feature_channels(), 4}, cfg);
  AccessAudit audit;
  const LabeledPool src(data.source_train, &audit);
  const UnlabeledPool tgt(data.target_train, &audit);
  auto st = tr.start(tr.detector().init_params(17));
  ParamSet<float> before = st.teacher;
  int audited = 0, exact = 0;
  std::size_t pseudo = 0;
  RunHooks<TrainerState> hooks;
  hooks.after_iteration = [&](const TrainerState& cur, const IterationMetrics& m) {
    auto expected = before;
    ema_update(expected, cur.student, cfg.ema_alpha);
    exact += cur.teacher == expected;
    before = cur.teacher;
    pseudo += m.pseudo_count;
    ++audited;
  };
  tr.adapt(st, src, tgt, hooks);
  ok = ok && audited == kEmaAuditIterations && exact == audited && pseudo > 0 &&
       audit.label_reads(data.target_train.name) == 0;
  std::ostringstream d;
  d << "max " << fmt("%.2f", worst_ulps) << " ulp vs reference, fixed point exact, " << exact << "/" << audited
    << " audited iterations bitwise EMA (" << pseudo << " pseudo labels)";
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 4. Pseudo-label filtering

Verdict pseudo_label_invariants() {
  std::mt19937_64 g(4242);
  std::uniform_int_distribution<int> count(0, 14);
  std::uniform_real_distribution<float> thr(0.f, 1.f), iou(0.2f, 0.8f);
  int equal = 0, invariant = 0;
  std::size_t kept_total = 0;
  for (int trial = 0; trial < kPseudoLabelSets; ++trial) {
    const auto raw = testing::random_detections(g, count(g), 3, 64.f);
    const float delta = thr(g), nms_iou = iou(g);
    const auto kept = filter_pseudo_labels(raw, delta, nms_iou);
    std::vector<Detection> oracle;
    for (const auto& d : testing::brute_force_suppression(raw, nms_iou))
      if (d.score >= delta) oracle.push_back(d);
    equal += kept == oracle;
    bool inv = true;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      inv = inv && kept[i].score >= delta;
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].label.index == kept[j].label.index)
          inv = inv && testing::plain_iou(kept[i].box, kept[j].box) <= nms_iou + 1e-6;
    }
    invariant += inv;
    kept_total += kept.size();
  }
  std::ostringstream d;
  d << equal << "/" << kPseudoLabelSets << " equal to oracle, " << invariant << "/" << kPseudoLabelSets
    << " satisfy score and IoU bounds (" << kept_total << " boxes kept)";
  return {equal == kPseudoLabelSets && invariant == kPseudoLabelSets, d.str()};
}

// ---------------------------------------------------------------------------
// 5. Average precision

Verdict ap_oracle() {
  bool ok = true;
  double worst = 0.0;
  int compared = 0;
  auto cmp = [&](const std::vector<ImageDetection>& dets, const std::vector<ImageBox>& gts, int cls) {
    const auto ap = average_precision(dets, gts, cls);
    const double ref = testing::brute_force_ap(dets, gts, cls, 0.5);
    if (!ap) return ok = false, 0.0;
    worst = std::max(worst, std::abs(*ap - ref));
    ++compared;
    return *ap;
  };
  const std::vector<ImageBox> one{{0, {10, 10, 30, 30}, ClassLabel{0}}};
  ok = ok && cmp({{0, {{11, 10, 30, 31}, ClassLabel{0}, 0.9f}}}, one, 0) == 1.0;
  ok = ok && cmp({}, one, 0) == 0.0;
  ok = ok && cmp({{0, {{40, 40, 60, 60}, ClassLabel{0}, 0.9f}}, {0, {{10, 10, 30, 30}, ClassLabel{0}, 0.5f}}}, one, 0) ==
                 0.5;
  std::mt19937_64 g(5555);
  for (int trial = 0; trial < kApInstances; ++trial) {
    const auto inst = testing::random_ap_instance(g);
    for (int c = 0; c < 2; ++c) {
      const bool has_gt =
          std::any_of(inst.gts.begin(), inst.gts.end(), [&](const ImageBox& b) { return b.label.index == c; });
      if (has_gt) cmp(inst.dets, inst.gts, c);
      else ok = ok && !average_precision(inst.dets, inst.gts, c).has_value();
    }
  }
  ok = ok && worst <= kApTolerance;
  return {ok, std::to_string(compared) + " class-instances (3 worked), max |diff| " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// 6 and 11. Seeded CLI runs

ExperimentConfig cli_config() {
  ExperimentConfig c;
  c.setup.train.burn_in_iterations = 100;
  c.setup.train.adapt_iterations = kDecompositionIterations;
  c.setup.eval_every = 100;
  c.checkpoint_every = 50;
  c.validate();
  return c;
}

struct CliRuns {
  fs::path a, b, c;
  std::string error;
};

CliRuns run_cli(const fs::path& root) {
  CliRuns r{root / "run_a", root / "run_b", root / "run_c", {}};
  const auto cfg = cli_config();
  std::ostringstream sink;
  CommandOptions opt;
  opt.out = &sink;
  opt.force = true;
  try {
    for (const auto& p : {r.a, r.b, r.c}) {
      fs::remove_all(p);
      const ExperimentDir dir(p);
      cmd_gen_data(cfg, dir, opt);
      cmd_pretrain(cfg, dir, opt);
    }
    cmd_adapt(cfg, ExperimentDir(r.a), opt);
    cmd_adapt(cfg, ExperimentDir(r.b), opt);
    auto stop = opt;
    stop.stop_at = kResumeStop;
    cmd_adapt(cfg, ExperimentDir(r.c), stop);
    auto resume = opt;
    resume.resume = true;
    cmd_adapt(cfg, ExperimentDir(r.c), resume);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

Verdict loss_decomposition(const CliRuns& runs) {
  if (!runs.error.empty()) return {false, "run failed: " + runs.error};
  const auto cfg = cli_config();
  const auto log = read_metrics_log(ExperimentDir(runs.a).metrics_log());
  double worst = 0.0;
  std::size_t nonzero_dis = 0, nonzero_unsup = 0;
  for (const auto& m : log) {
    const double recomputed =
        m.sup.total() + cfg.setup.train.lambda_unsup * m.unsup + cfg.setup.train.lambda_dis * m.dis;
    worst = std::max(worst, std::abs(m.total - recomputed));
    nonzero_dis += m.dis != 0.0;
    nonzero_unsup += m.unsup != 0.0;
  }
  const bool ok = static_cast<int>(log.size()) == kDecompositionIterations && worst <= kTotalLossTolerance;
  std::ostringstream d;
  d << log.size() << " iterations, max |total - sum| " << fmt("%.1e", worst) << " (L_dis nonzero on " << nonzero_dis
    << ", L_unsup on " << nonzero_unsup << ")";
  return {ok, d.str()};
}

Verdict determinism_and_resume(const CliRuns& runs) {
  if (!runs.error.empty()) return {false, "run failed: " + runs.error};
  const ExperimentDir a(runs.a), b(runs.b), c(runs.c);
  const bool same_pre = slurp(a.pretrain_log()) == slurp(b.pretrain_log()) &&
                        slurp(a.pretrain_checkpoint()) == slurp(b.pretrain_checkpoint());
  const bool same_log = slurp(a.metrics_log()) == slurp(b.metrics_log());
  const bool same_final = slurp(a.adapt_final()) == slurp(b.adapt_final());

  std::ifstream la(a.metrics_log()), lc(c.metrics_log());
  std::string x, y;
  int lines = 0, matching_after = 0, after = 0;
  while (std::getline(la, x)) {
    const bool got = static_cast<bool>(std::getline(lc, y));
    if (lines >= kResumeStop) ++after, matching_after += got && x == y;
    ++lines;
  }
  const bool no_extra = !std::getline(lc, y);
  const bool resume_final = slurp(a.adapt_final()) == slurp(c.adapt_final());
  const bool ok = same_pre && same_log && same_final && lines == kDecompositionIterations &&
                  matching_after == after && no_extra && resume_final;
  std::ostringstream d;
  d << "identical runs: pretrain " << (same_pre ? "same" : "DIFF") << ", log " << (same_log ? "same" : "DIFF")
    << ", final " << (same_final ? "same" : "DIFF") << "; resumed at " << kResumeStop << ": " << matching_after << "/"
    << after << " later records identical, final checkpoint " << (resume_final ? "same" : "DIFF");
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 7-10. Seeded adaptation experiments

struct SeedResult {
  std::uint64_t seed = 0;
  AblationReport report;
  double seconds = 0.0;
};

double row_map(const SeedResult& s, const std::string& row) {
  const auto* r = s.report.find(row);
  return r && r->ok() ? r->reported->map : std::numeric_limits<double>::quiet_NaN();
}

bool all_ok(const std::vector<SeedResult>& runs, std::string* why) {
  for (const auto& s : runs)
    for (const auto& r : s.report.rows)
      if (!r.ok()) {
        *why = "seed " + std::to_string(s.seed) + " row " + r.name + " failed: " + r.error;
        return false;
      }
  return true;
}

std::string config_text(const TrainConfig& t) {
  ExperimentConfig c;
  c.setup.train = t;
  return config_to_json(c).dump();
}

std::vector<SeedResult> run_experiment(const fs::path& root, const std::string& tag, ShiftKind kind, float severity,
                                       const AblationSettings& settings) {
  std::vector<SeedResult> out;
  for (std::uint64_t seed : kSeeds) {
    const auto t0 = Clock::now();
    SceneSpec spec;
    spec.seed = seed;
    spec.shift_kind = kind;
    spec.shift_severity = severity;
    const auto data = build_experiment(spec, ExperimentSizes{200, 200, 100, false});
    ExperimentSetup setup;
    setup.train.seed = seed;
    setup.eval_every = 0;
    AccessAudit audit;
    SeedResult r;
    r.seed = seed;
    r.report = run_ablations(setup, data, settings, &audit);
    r.seconds = seconds_since(t0);
    auto j = report_to_json(r.report);
    j["seconds"] = r.seconds;
    j["target_train_label_reads"] = audit.label_reads(data.target_train.name);
    ExperimentDir::write_text(root / (tag + "_seed" + std::to_string(seed) + ".json"), j.dump(2) + "\n");
    std::cout << "  [" << tag << " seed " << seed << ": " << fmt("%.0f", r.seconds) << " s]";
    for (const auto& row : r.report.rows)
      std::cout << " " << row.name << "=" << (row.ok() ? fmt("%.3f", row.reported->map) : std::string("error"));
    std::cout << "\n" << std::flush;
    out.push_back(std::move(r));
  }
  return out;
}

Verdict adaptation_gain(const std::vector<SeedResult>& fog) {
  std::string why;
  if (!all_ok(fog, &why)) return {false, why};
  int wins = 0;
  double total_s = 0.0;
  std::ostringstream d;
  d << "gain (AT - source-only):";
  for (const auto& s : fog) {
    const double gain = row_map(s, kRowFull) - row_map(s, kRowSourceOnly);
    wins += gain >= kMinGain;
    total_s += s.seconds;
    d << " seed " << s.seed << " " << fmt("%+.3f", gain);
  }
  d << "; " << wins << "/3 >= " << fmt("%.2f", kMinGain) << ", " << fmt("%.1f", total_s / 60.0) << " min";
  return {wins >= kSeedsNeeded && total_s / 60.0 < kFogBudgetMinutes, d.str()};
}

std::optional<double> final_fp_ratio(const std::vector<IterationMetrics>& log, int iterations) {
  const auto curves = loss_curves(log);
  const int from = iterations - static_cast<int>(std::lround(kFinalWindow * iterations)) + 1;
  return window_mean(curves, "fp_ratio", from, iterations + 1);
}

Verdict fp_trend(const std::vector<SeedResult>& fog) {
  std::string why;
  if (!all_ok(fog, &why)) return {false, why};
  const int n = ExperimentSetup{}.train.adapt_iterations;
  int wins = 0;
  std::ostringstream d;
  d << "final-window FP ratio AT vs no_dis:";
  for (const auto& s : fog) {
    const auto at = final_fp_ratio(s.report.find(kRowFull)->log, n);
    const auto nd = final_fp_ratio(s.report.find(kRowNoDis)->log, n);
    if (!at || !nd) return {false, "missing FP ratios on seed " + std::to_string(s.seed)};
    wins += *at < *nd;
    d << " seed " << s.seed << " " << fmt("%.4f", *at) << "/" << fmt("%.4f", *nd);
  }
  d << "; " << wins << "/3 strictly lower";
  return {wins >= kSeedsNeeded, d.str()};
}

Verdict lambda_sweep(const std::vector<SeedResult>& fog, bool reuse_ok) {
  std::string why;
  if (!all_ok(fog, &why)) return {false, why};
  std::vector<double> l0, l005, l01;
  for (const auto& s : fog) {
    l0.push_back(row_map(s, sweep_row_name(0.0)));
    l005.push_back(row_map(s, sweep_row_name(0.05)));
    l01.push_back(row_map(s, kRowFull));
  }
  const double m0 = median(l0), m005 = median(l005), m01 = median(l01);
  std::ostringstream d;
  d << "median mAP lambda_dis 0: " << fmt("%.3f", m0) << ", 0.05: " << fmt("%.3f", m005) << ", 0.1: "
    << fmt("%.3f", m01) << " (0.1 is the full_AT run)";
  return {reuse_ok && m005 > m0 && m01 > m0, d.str()};
}

Verdict ablation_ordering(const std::vector<SeedResult>& palette) {
  std::string why;
  if (!all_ok(palette, &why)) return {false, why};
  auto med = [&](const std::string& row) {
    std::vector<double> v;
    for (const auto& s : palette) v.push_back(row_map(s, row));
    return median(v);
  };
  const double full = med(kRowFull);
  bool ok = true;
  std::ostringstream d;
  d << "median mAP full_AT " << fmt("%.3f", full);
  for (const char* row : {kRowNoDis, kRowNoWsAug, kRowNoMutual}) {
    const double m = med(row);
    ok = ok && full > m;
    d << ", " << row << " " << fmt("%.3f", m);
  }
  d << ", source_only " << fmt("%.3f", med(kRowSourceOnly));
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------

int run(const fs::path& out, const std::set<int>& only) {
  fs::create_directories(out);
  auto want = [&](int c) { return only.empty() || only.count(c) > 0; };
  std::vector<std::pair<int, Verdict>> results;
  auto report = [&](int c, Verdict v) {
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "\n" << std::flush;
    results.emplace_back(c, std::move(v));
  };
  auto guarded = [&](int c, const std::function<Verdict()>& f) {
    if (!want(c)) return;
    try {
      report(c, f());
    } catch (const std::exception& e) {
      report(c, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, gradient_checks);
  guarded(2, gradient_reversal);
  guarded(3, ema_exactness);
  guarded(4, pseudo_label_invariants);
  guarded(5, ap_oracle);

  if (want(6) || want(11)) {
    const auto runs = run_cli(out / "cli");
    guarded(6, [&] { return loss_decomposition(runs); });
    guarded(11, [&] { return determinism_and_resume(runs); });
  }

  if (want(7) || want(8) || want(9)) {
    // lambda_dis = 0.1 is the default, so that sweep point is the full_AT
    // run; check the two configurations really coincide before reusing it.
    const TrainConfig base = ExperimentSetup{}.train;
    const bool reuse_ok =
        config_text(detail::row_config(base, sweep_row_name(0.1))) == config_text(detail::row_config(base, kRowFull));
    AblationSettings fog;
    fog.rows = {kRowSourceOnly, kRowFull, kRowNoDis};
    fog.lambda_sweep = {0.0, 0.05};
    const auto runs = run_experiment(out, "fog", ShiftKind::kFog, SceneSpec{}.shift_severity, fog);
    guarded(7, [&] { return adaptation_gain(runs); });
    guarded(8, [&] { return fp_trend(runs); });
    guarded(9, [&] { return lambda_sweep(runs, reuse_ok); });
  }

  if (want(10)) {
    AblationSettings palette;
    palette.rows = {kRowSourceOnly, kRowFull, kRowNoDis, kRowNoWsAug, kRowNoMutual};
    palette.lambda_sweep = {};
    palette.probe_pseudo_labels = false;
    std::vector<SeedResult> runs;
    try {
      runs = run_experiment(out, "palette", ShiftKind::kPalette, 5.f, palette);
    } catch (const std::exception& e) {
      report(10, {false, std::string("exception: ") + e.what()});
    }
    if (!runs.empty()) guarded(10, [&] { return ablation_ordering(runs); });
  }

  std::sort(results.begin(), results.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  int failed = 0;
  std::cout << "\nsummary:\n";
  for (const auto& [c, v] : results) {
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << "\n";
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace shiftdet

int main(int argc, char** argv) {
  std::filesystem::path out = "acceptance_runs";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--out DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  return shiftdet::run(out, only);
}
