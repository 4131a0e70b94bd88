// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "shiftdet/domain/box.hpp"

namespace shiftdet {

// (dx, dy, dw, dh) = ((gx - ax) / aw, (gy - ay) / ah, log(gw / aw), log(gh / ah))
using BoxDelta = std::array<double, 4>;

// exp() argument cap for the scale terms, as in the usual Faster R-CNN coder.
inline constexpr double kMaxLogScale = 4.135166556742356;  // log(1000 / 16)

inline BoxDelta encode_box(const BoundingBox& anchor, const BoundingBox& target) {
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x1 + 0.5 * aw, acy = anchor.y1 + 0.5 * ah;
  const double gw = target.width(), gh = target.height();
  const double gcx = target.x1 + 0.5 * gw, gcy = target.y1 + 0.5 * gh;
  return {(gcx - acx) / aw, (gcy - acy) / ah, std::log(gw / aw), std::log(gh / ah)};
}

inline BoundingBox decode_box(const BoundingBox& anchor, const BoxDelta& d) {
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x1 + 0.5 * aw, acy = anchor.y1 + 0.5 * ah;
  const double cx = acx + d[0] * aw, cy = acy + d[1] * ah;
  const double w = aw * std::exp(std::min(d[2], kMaxLogScale));
  const double h = ah * std::exp(std::min(d[3], kMaxLogScale));
  return {static_cast<float>(cx - 0.5 * w), static_cast<float>(cy - 0.5 * h), static_cast<float>(cx + 0.5 * w),
          static_cast<float>(cy + 0.5 * h)};
}

// Square anchors, `scales.size()` per feature cell, centered on the cell.
// Anchor index = cell * num_scales + scale_index, cells in row-major order.
inline std::vector<BoundingBox> make_anchors(int feat_h, int feat_w, int stride, const std::vector<float>& scales) {
  std::vector<BoundingBox> anchors;
  anchors.reserve(static_cast<std::size_t>(feat_h) * feat_w * scales.size());
  for (int y = 0; y < feat_h; ++y) {
    for (int x = 0; x < feat_w; ++x) {
      const float cx = (x + 0.5f) * stride, cy = (y + 0.5f) * stride;
      for (float s : scales) anchors.push_back({cx - 0.5f * s, cy - 0.5f * s, cx + 0.5f * s, cy + 0.5f * s});
    }
  }
  return anchors;
}

// Indices of `scores` sorted by descending score; equal scores keep index
// order.
inline std::vector<int> order_by_score(const std::vector<float>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

// Greedy NMS: walk boxes by descending score, drop any box whose IoU with
// an already kept box exceeds `iou_threshold`. Returns kept indices in
// descending score order, at most `max_keep` of them (negative = no cap).
inline std::vector<int> nms(const std::vector<BoundingBox>& boxes, const std::vector<float>& scores,
                            float iou_threshold, int max_keep = -1) {
  std::vector<int> kept;
  for (int i : order_by_score(scores)) {
    if (max_keep >= 0 && static_cast<int>(kept.size()) >= max_keep) break;
    bool suppressed = false;
    for (int k : kept) {
      if (box_iou(boxes[i], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

// NMS run independently per class label; output is sorted by descending
// score across classes.
inline std::vector<Detection> per_class_nms(const std::vector<Detection>& dets, float iou_threshold) {
  int max_label = -1;
  for (const auto& d : dets) max_label = std::max(max_label, d.label.index);
  std::vector<Detection> out;
  for (int k = 0; k <= max_label; ++k) {
    std::vector<BoundingBox> boxes;
    std::vector<float> scores;
    std::vector<const Detection*> src;
    for (const auto& d : dets) {
      if (d.label.index != k) continue;
      boxes.push_back(d.box);
      scores.push_back(d.score);
      src.push_back(&d);
    }
    for (int i : nms(boxes, scores, iou_threshold)) out.push_back(*src[static_cast<std::size_t>(i)]);
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

}  // namespace shiftdet
