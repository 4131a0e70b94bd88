// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/detector/sgd.hpp"

namespace shiftdet {

struct TrainConfig {
  double lambda_unsup = 1.0;
  double lambda_dis = 0.1;
  float confidence_threshold = 0.8f;  // delta
  // Desk-scale horizon. The full-length schedule uses 0.9996.
  double ema_alpha = 0.996;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int burn_in_iterations = 500;
  int adapt_iterations = 2000;
  int batch_source = 8;
  int batch_target = 8;
  float nms_iou = 0.5f;
  double grl_coefficient = 1.0;
  std::uint64_t seed = 1;

  bool disable_dis = false;
  bool disable_ws_aug = false;
  bool disable_mutual = false;

  // Burn-in sees weak views only unless this is set.
  bool pretrain_strong_aug = false;
  // Cross-checks view geometry every iteration (slow).
  bool debug_checks = false;

  SgdConfig sgd() const { return {lr, momentum, weight_decay}; }

  void validate() const {
    auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    if (!(lambda_unsup >= 0.0) || !(lambda_dis >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (!unit(confidence_threshold)) throw ConfigError("confidence_threshold must be in [0, 1]");
    if (!unit(ema_alpha)) throw ConfigError("ema_alpha must be in [0, 1]");
    if (!unit(nms_iou)) throw ConfigError("nms_iou must be in [0, 1]");
    if (!(lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("bad optimizer settings");
    if (burn_in_iterations < 0 || adapt_iterations < 0) throw ConfigError("iteration counts must be >= 0");
    if (batch_source < 1 || batch_target < 1) throw ConfigError("batch sizes must be >= 1");
  }
};

}  // namespace shiftdet
