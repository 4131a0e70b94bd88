// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// VOC-style average precision (all-point interpolation) and the
// pseudo-label false-positive ratio.

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "shiftdet/domain/box.hpp"

namespace shiftdet {

struct ImageDetection {
  int image_id = 0;
  Detection det;
};

struct ImageBox {
  int image_id = 0;
  BoundingBox box;
  ClassLabel label;
};

namespace detail {

// Descending score; ties broken on content so results never depend on the
// order detections were supplied in.
inline bool score_before(const ImageDetection& a, const ImageDetection& b) {
  const auto ka = std::make_tuple(-a.det.score, a.image_id, a.det.box.x1, a.det.box.y1, a.det.box.x2, a.det.box.y2);
  const auto kb = std::make_tuple(-b.det.score, b.image_id, b.det.box.x1, b.det.box.y1, b.det.box.x2, b.det.box.y2);
  return ka < kb;
}

// Greedy matching of class-`cls` detections in score order: each detection
// takes the unmatched same-image ground truth with the highest IoU, if that
// IoU reaches the threshold. Returns the TP flag per detection in sorted
// order.
inline std::vector<bool> greedy_match(std::vector<ImageDetection>& dets, const std::vector<ImageBox>& gts, int cls,
                                      float iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(), score_before);
  std::vector<bool> used(gts.size(), false), tp(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    float best = -1.f;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].label.index != cls || gts[j].image_id != dets[i].image_id) continue;
      const float iou = box_iou(dets[i].det.box, gts[j].box);
      if (iou > best) best = iou, best_j = j;
    }
    if (best_j < gts.size() && best >= iou_threshold) {
      used[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

}  // namespace detail

// Area under the precision-recall curve after taking the monotone
// precision envelope. nullopt when the class has no ground truth.
inline std::optional<double> average_precision(const std::vector<ImageDetection>& detections,
                                               const std::vector<ImageBox>& gts, int cls,
                                               float iou_threshold = 0.5f) {
  const auto n_gt = std::count_if(gts.begin(), gts.end(), [&](const ImageBox& g) { return g.label.index == cls; });
  if (n_gt == 0) return std::nullopt;
  std::vector<ImageDetection> dets;
  for (const auto& d : detections)
    if (d.det.label.index == cls) dets.push_back(d);
  const auto tp = detail::greedy_match(dets, gts, cls, iou_threshold);
  const std::size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  double ctp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ctp += tp[i] ? 1.0 : 0.0;
    precision[i] = ctp / static_cast<double>(i + 1);
    recall[i] = ctp / static_cast<double>(n_gt);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

// Arithmetic mean of the defined entries; nullopt if there are none.
inline std::optional<double> mean_ap(const std::vector<std::optional<double>>& per_class) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class)
    if (v) sum += *v, ++n;
  if (n == 0) return std::nullopt;
  return sum / n;
}

struct FalsePositiveCount {
  std::size_t unmatched = 0;
  std::size_t total = 0;
  bool empty = true;  // no pseudo boxes: the ratio is reported as 0
  double ratio() const { return total == 0 ? 0.0 : static_cast<double>(unmatched) / static_cast<double>(total); }

  FalsePositiveCount& operator+=(const FalsePositiveCount& o) {
    unmatched += o.unmatched, total += o.total;
    empty = total == 0;
    return *this;
  }
};

// A pseudo box is a false positive iff it finds no same-class ground truth
// at IoU >= threshold under greedy one-to-one matching by score.
inline FalsePositiveCount false_positive_ratio(const std::vector<Detection>& pseudo,
                                               const std::vector<Annotation>& gt, float iou_threshold = 0.5f) {
  FalsePositiveCount out;
  out.total = pseudo.size();
  out.empty = pseudo.empty();
  std::vector<ImageDetection> dets;
  std::vector<ImageBox> gts;
  for (const auto& d : pseudo) dets.push_back({0, d});
  for (const auto& g : gt) gts.push_back({0, g.box, g.label});
  std::vector<int> classes;
  for (const auto& d : pseudo) classes.push_back(d.label.index);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (int c : classes) {
    std::vector<ImageDetection> mine;
    for (const auto& d : dets)
      if (d.det.label.index == c) mine.push_back(d);
    for (bool hit : detail::greedy_match(mine, gts, c, iou_threshold)) out.unmatched += hit ? 0 : 1;
  }
  return out;
}

}  // namespace shiftdet
