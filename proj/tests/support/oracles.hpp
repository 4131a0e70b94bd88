// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the library code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "shiftdet/detector/detector.hpp"
#include "shiftdet/domain/box.hpp"
#include "shiftdet/eval/metrics.hpp"
#include "shiftdet/nn/params.hpp"

namespace shiftdet::testing {

// IoU by counting cells of a fine grid; slow but shares nothing with
// box_iou.
inline double grid_iou(const BoundingBox& a, const BoundingBox& b, int cells_per_unit) {
  const double lo_x = std::min(a.x1, b.x1), hi_x = std::max(a.x2, b.x2);
  const double lo_y = std::min(a.y1, b.y1), hi_y = std::max(a.y2, b.y2);
  const int nx = static_cast<int>(std::ceil((hi_x - lo_x) * cells_per_unit));
  const int ny = static_cast<int>(std::ceil((hi_y - lo_y) * cells_per_unit));
  long inter = 0, uni = 0;
  auto in = [](const BoundingBox& r, double x, double y) { return x >= r.x1 && x < r.x2 && y >= r.y1 && y < r.y2; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = lo_x + (i + 0.5) / cells_per_unit, y = lo_y + (j + 0.5) / cells_per_unit;
      const bool ia = in(a, x, y), ib = in(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double plain_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, double(std::min(a.x2, b.x2)) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, double(std::min(a.y2, b.y2)) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double ua = double(a.x2 - a.x1) * (a.y2 - a.y1) + double(b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return ua > 0 ? inter / ua : 0.0;
}

// Repeatedly takes the best remaining detection of each class and deletes
// everything of that class overlapping it by more than `iou`. Output sorted
// by descending score.
inline std::vector<Detection> brute_force_suppression(std::vector<Detection> pool, float iou) {
  std::vector<Detection> kept;
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
      if (pool[i].score > pool[best].score) best = i;
    const Detection top = pool[best];
    kept.push_back(top);
    std::vector<Detection> rest;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i == best) continue;
      if (pool[i].label.index == top.label.index && plain_iou(pool[i].box, top.box) > iou) continue;
      rest.push_back(pool[i]);
    }
    pool = std::move(rest);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return kept;
}

// AP by enumerating every score cutoff: for the top-k detections, match
// from scratch, record (precision, recall), then integrate the
// interpolated precision over recall steps of 1 / n_gt. Scores must be
// distinct.
inline double brute_force_ap(const std::vector<ImageDetection>& dets, const std::vector<ImageBox>& gts, int cls,
                             double iou_threshold) {
  std::vector<ImageDetection> mine;
  for (const auto& d : dets)
    if (d.det.label.index == cls) mine.push_back(d);
  std::sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) { return a.det.score > b.det.score; });
  int n_gt = 0;
  for (const auto& g : gts) n_gt += g.label.index == cls;
  std::vector<int> tp_at(mine.size() + 1, 0);
  for (std::size_t k = 1; k <= mine.size(); ++k) {
    std::vector<bool> used(gts.size(), false);
    int tp = 0;
    for (std::size_t i = 0; i < k; ++i) {
      double best = -1.0;
      std::size_t bj = gts.size();
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (used[j] || gts[j].label.index != cls || gts[j].image_id != mine[i].image_id) continue;
        const double v = plain_iou(mine[i].det.box, gts[j].box);
        if (v > best) best = v, bj = j;
      }
      if (bj < gts.size() && best >= iou_threshold) used[bj] = true, ++tp;
    }
    tp_at[k] = tp;
  }
  // For each recall level r = t / n_gt, the best precision at any cutoff
  // reaching it.
  double ap = 0.0;
  for (int t = 1; t <= n_gt; ++t) {
    double best = 0.0;
    for (std::size_t k = 1; k <= mine.size(); ++k)
      if (tp_at[k] >= t) best = std::max(best, static_cast<double>(tp_at[k]) / static_cast<double>(k));
    ap += best / n_gt;
  }
  return ap;
}

// Per-group comparison of an analytic gradient with central differences.
struct GroupCheck {
  std::string group;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  std::size_t checked = 0;
  // Checked with a one-sided difference because one probe crossed a kink.
  std::size_t one_sided = 0;
  // Both probes crossed a kink; not checked.
  std::size_t excluded = 0;
};

// Activation pattern of the piecewise-linear units the loss goes through.
// A central difference is only meaningful where the pattern is the same at
// theta - eps, theta and theta + eps. When one probe changes it, the other
// side still lies on the piece the analytic gradient was taken on and a
// one-sided difference is used instead.
using KinkSignature = std::function<std::vector<bool>(const ParamSet<double>&)>;

// rel = |g_a - g_n| / (|g_a| + |g_n|) over the checked coordinates of each
// group; two exactly zero gradients give 0.
inline std::vector<GroupCheck> finite_difference_check(
    ParamSet<double> params, const ParamSet<double>& analytic,
    const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups,
    const std::function<double(const ParamSet<double>&)>& f, double eps = 1e-4, const KinkSignature& kinks = {}) {
  std::vector<GroupCheck> out;
  const std::vector<bool> base = kinks ? kinks(params) : std::vector<bool>{};
  const double f0 = kinks ? f(params) : 0.0;
  for (const auto& [name, arrays] : groups) {
    GroupCheck gc;
    gc.group = name;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t ai : arrays) {
      auto& v = params[ai].values;
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double keep = v[k];
        v[k] = keep + eps;
        const double up = f(params);
        const bool up_kink = kinks && kinks(params) != base;
        v[k] = keep - eps;
        const double down = f(params);
        const bool down_kink = kinks && kinks(params) != base;
        v[k] = keep;
        if (up_kink && down_kink) {
          ++gc.excluded;
          continue;
        }
        ++gc.checked;
        double num = (up - down) / (2.0 * eps);
        if (up_kink) num = (f0 - down) / eps, ++gc.one_sided;
        if (down_kink) num = (up - f0) / eps, ++gc.one_sided;
        const double ana = analytic[ai].values[k];
        diff2 += (num - ana) * (num - ana);
        a2 += ana * ana;
        n2 += num * num;
      }
    }
    gc.analytic_norm = std::sqrt(a2);
    gc.numeric_norm = std::sqrt(n2);
    const double denom = gc.analytic_norm + gc.numeric_norm;
    gc.rel_error = denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
    out.push_back(gc);
  }
  return out;
}

inline BoundingBox random_box(std::mt19937_64& g, float extent, float min_side, float max_side) {
  std::uniform_real_distribution<float> side(min_side, max_side);
  const float w = side(g), h = side(g);
  std::uniform_real_distribution<float> px(0.f, extent - w), py(0.f, extent - h);
  const float x = px(g), y = py(g);
  return {x, y, x + w, y + h};
}

// Random detections with distinct scores, clustered so that suppression
// actually happens.
inline std::vector<Detection> random_detections(std::mt19937_64& g, int n, int classes, float extent) {
  std::vector<Detection> out;
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::uniform_real_distribution<float> jitter(-4.f, 4.f);
  std::vector<float> scores(static_cast<std::size_t>(n));
  std::iota(scores.begin(), scores.end(), 1.f);
  std::shuffle(scores.begin(), scores.end(), g);
  const BoundingBox anchor = random_box(g, extent, 8.f, 20.f);
  for (int i = 0; i < n; ++i) {
    BoundingBox b = random_box(g, extent, 6.f, 20.f);
    if (i % 2 == 0) {
      b = {anchor.x1 + jitter(g), anchor.y1 + jitter(g), anchor.x2 + jitter(g), anchor.y2 + jitter(g)};
      if (!b.valid()) b = anchor;
    }
    out.push_back({b, ClassLabel{cls(g)}, scores[static_cast<std::size_t>(i)] / (n + 1.f)});
  }
  return out;
}

struct ApInstance {
  std::vector<ImageDetection> dets;
  std::vector<ImageBox> gts;
};

// Up to 10 detections and 5 ground-truth boxes of two classes over three
// images, half of the detections placed near a ground-truth box. Scores are
// distinct.
inline ApInstance random_ap_instance(std::mt19937_64& g) {
  ApInstance inst;
  std::uniform_int_distribution<int> n_gt(1, 5), n_det(0, 10), img(0, 2), cls(0, 1);
  std::uniform_real_distribution<float> jitter(-5.f, 5.f);
  const int ng = n_gt(g), nd = n_det(g);
  for (int i = 0; i < ng; ++i) inst.gts.push_back({img(g), random_box(g, 64.f, 8.f, 24.f), ClassLabel{cls(g)}});
  std::vector<float> scores(static_cast<std::size_t>(nd));
  std::iota(scores.begin(), scores.end(), 1.f);
  std::shuffle(scores.begin(), scores.end(), g);
  for (int i = 0; i < nd; ++i) {
    ImageDetection d{img(g), {random_box(g, 64.f, 8.f, 24.f), ClassLabel{cls(g)}, scores[static_cast<std::size_t>(i)] / 11.f}};
    if (i % 2 == 0) {
      const auto& t = inst.gts[static_cast<std::size_t>(i / 2) % inst.gts.size()];
      const BoundingBox b{t.box.x1 + jitter(g), t.box.y1 + jitter(g), t.box.x2 + jitter(g), t.box.y2 + jitter(g)};
      if (b.valid()) d.det.box = b;
      d.image_id = t.image_id;
      d.det.label = t.label;
    }
    inst.dets.push_back(d);
  }
  return inst;
}

}  // namespace shiftdet::testing
