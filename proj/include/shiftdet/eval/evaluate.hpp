// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftdet/detector/detector.hpp"
#include "shiftdet/domain/dataset_io.hpp"
#include "shiftdet/domain/image.hpp"
#include "shiftdet/eval/metrics.hpp"

namespace shiftdet {

struct EvalSettings {
  float score_threshold = 0.05f;
  float nms_iou = 0.5f;
  float iou_threshold = 0.5f;
};

struct EvalResult {
  std::string split;
  std::string split_fingerprint;
  std::vector<std::optional<double>> per_class_ap;
  double map = 0.0;
  std::size_t images = 0;
  std::size_t detections = 0;
  std::size_t ground_truth = 0;
  std::size_t true_positives = 0;  // matched pairs over all classes
  std::vector<std::string> warnings;
};

// Scores a detection list against ground truth for every class in
// [0, num_classes). Classes without ground truth are left out of the mean.
inline EvalResult score_detections(const std::vector<ImageDetection>& dets, const std::vector<ImageBox>& gts,
                                   int num_classes, float iou_threshold = 0.5f) {
  EvalResult r;
  r.detections = dets.size();
  r.ground_truth = gts.size();
  for (int c = 0; c < num_classes; ++c) {
    r.per_class_ap.push_back(average_precision(dets, gts, c, iou_threshold));
    if (!r.per_class_ap.back()) r.warnings.push_back("class " + std::to_string(c) + " has no ground truth; excluded");
    std::vector<ImageDetection> mine;
    for (const auto& d : dets)
      if (d.det.label.index == c) mine.push_back(d);
    for (bool tp : detail::greedy_match(mine, gts, c, iou_threshold)) r.true_positives += tp;
  }
  r.map = mean_ap(r.per_class_ap).value_or(0.0);
  return r;
}

template <typename S>
EvalResult evaluate_detector(const Detector<S>& det, const ParamSet<S>& params, const Dataset& data,
                             const EvalSettings& settings = {}) {
  std::vector<ImageDetection> dets;
  std::vector<ImageBox> gts;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    const int id = static_cast<int>(i);
    for (const auto& d : det.detect(params, item.pixels, settings.score_threshold, settings.nms_iou))
      dets.push_back({id, d});
    for (const auto& a : item.annotations) gts.push_back({id, a.box, a.label});
  }
  EvalResult r = score_detections(dets, gts, det.config().num_classes, settings.iou_threshold);
  r.split = data.name;
  r.split_fingerprint = dataset_fingerprint(data);
  r.images = data.items.size();
  return r;
}

inline nlohmann::json eval_to_json(const EvalResult& r) {
  nlohmann::json ap = nlohmann::json::array();
  for (const auto& v : r.per_class_ap) ap.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"split", r.split},
          {"split_fingerprint", r.split_fingerprint},
          {"per_class_ap", ap},
          {"map", r.map},
          {"images", r.images},
          {"detections", r.detections},
          {"ground_truth", r.ground_truth},
          {"true_positives", r.true_positives},
          {"warnings", r.warnings}};
}

}  // namespace shiftdet
