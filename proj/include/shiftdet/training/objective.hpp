// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/detector/detector.hpp"
#include "shiftdet/nn/params.hpp"
#include "shiftdet/training/pseudo_labels.hpp"

namespace shiftdet {

inline double total_loss(double sup, double unsup, double dis, double lambda_unsup, double lambda_dis) {
  return sup + lambda_unsup * unsup + lambda_dis * dis;
}

template <typename S>
struct TeacherStudent {
  ParamSet<S> teacher;
  ParamSet<S> student;
};

template <typename S>
TeacherStudent<S> duplicate(const ParamSet<S>& params) {
  if (!params.all_finite()) throw NumericalError("cannot duplicate non-finite parameters");
  return {params, params};
}

// teacher <- alpha * teacher + (1 - alpha) * student, evaluated as
// teacher + (1 - alpha) * (student - teacher) so that equal inputs are an
// exact fixed point.
template <typename S>
void ema_update(ParamSet<S>& teacher, const ParamSet<S>& student, double alpha) {
  if (!teacher.same_layout(student)) throw ConfigError("teacher and student layouts differ");
  const S step = static_cast<S>(1.0 - alpha);
  for (std::size_t i = 0; i < teacher.count(); ++i) {
    auto& t = teacher[i].values;
    const auto& s = student[i].values;
    for (std::size_t k = 0; k < t.size(); ++k) t[k] += step * (s[k] - t[k]);
  }
}

// Classification-only loss against pseudo labels for one image's features:
// RPN objectness and ROI classification. With an empty pseudo set only the
// RPN background term remains.
template <typename S>
DetectionLoss pseudo_label_head_loss(const Detector<S>& det, const ParamSet<S>& p, const Tensor<S>& feat,
                                     const std::vector<Detection>& pseudo, S weight, ParamSet<S>* grad,
                                     Tensor<S>* dfeat) {
  return det.head_loss(p, feat, as_annotations(pseudo), HeadTerms::kClassificationOnly, weight, grad, dfeat);
}

// Mean over images of L_cls^rpn + L_cls^roi. The gradient of weight times
// that mean goes into grad.
template <typename S>
double unsupervised_loss(const Detector<S>& det, const ParamSet<S>& p, const std::vector<const Image*>& strong_images,
                         const PseudoLabelSet& pseudo, S weight, ParamSet<S>* grad) {
  if (strong_images.size() != pseudo.per_image.size()) throw ConfigError("one pseudo-label list per image required");
  if (strong_images.empty()) return 0.0;
  const S w = weight / S(strong_images.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < strong_images.size(); ++i) {
    const auto l = det.image_loss(p, *strong_images[i], as_annotations(pseudo.per_image[i]),
                                  HeadTerms::kClassificationOnly, w, grad);
    sum += l.total();
  }
  return sum / static_cast<double>(strong_images.size());
}

}  // namespace shiftdet
