// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "shiftdet/augmentation.hpp"
#include "shiftdet/detector/box_ops.hpp"
#include "shiftdet/detector/detector.hpp"
#include "shiftdet/domain/box.hpp"

namespace shiftdet {

// Per-image teacher detections kept as dummy ground truth. Every score is
// >= the confidence threshold and same-class boxes overlap by at most the
// NMS IoU.
struct PseudoLabelSet {
  std::vector<std::vector<Detection>> per_image;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& v : per_image) n += v.size();
    return n;
  }
};

// Per-class NMS, then the confidence threshold.
inline std::vector<Detection> filter_pseudo_labels(const std::vector<Detection>& raw, float threshold, float nms_iou) {
  std::vector<Detection> out;
  for (const auto& d : per_class_nms(raw, nms_iou))
    if (d.score >= threshold) out.push_back(d);
  return out;
}

template <typename S>
PseudoLabelSet generate_pseudo_labels(const Detector<S>& det, const ParamSet<S>& teacher,
                                      const std::vector<const Image*>& weak_images, float threshold, float nms_iou) {
  PseudoLabelSet out;
  for (const auto* img : weak_images) out.per_image.push_back(det.detect(teacher, *img, threshold, nms_iou));
  return out;
}

inline std::vector<Annotation> as_annotations(const std::vector<Detection>& dets) {
  std::vector<Annotation> out;
  out.reserve(dets.size());
  for (const auto& d : dets) out.push_back({d.box, d.label});
  return out;
}

// Carries boxes predicted on one view of an image onto another view of the
// same image: back to the original frame, then forward into the target view.
inline std::vector<Detection> transfer_between_views(const std::vector<Detection>& dets, const ViewTransform& from,
                                                     const ViewTransform& to) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    const BoundingBox b = to.forward(from.inverse(d.box));
    if (b.valid()) out.push_back({b, d.label, d.score});
  }
  return out;
}

}  // namespace shiftdet
