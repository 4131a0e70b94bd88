// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/nn/params.hpp"

namespace shiftdet {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Momentum SGD with L2 weight decay folded into the gradient:
//   v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v
// A non-finite gradient aborts before any parameter is touched; an update
// that overflows throws after the fact.
template <typename S>
void sgd_step(ParamSet<S>& params, const ParamSet<S>& grads, ParamSet<S>& velocity, const SgdConfig& cfg) {
  for (std::size_t i = 0; i < grads.count(); ++i)
    for (S g : grads[i].values)
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericalError("non-finite gradient in " + grads[i].name);
  const S lr = static_cast<S>(cfg.lr), mom = static_cast<S>(cfg.momentum), wd = static_cast<S>(cfg.weight_decay);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params[i].values;
    auto& v = velocity[i].values;
    const auto& g = grads[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mom * v[k] + (g[k] + wd * p[k]);
      p[k] -= lr * v[k];
    }
    for (S x : p)
      if (!std::isfinite(static_cast<double>(x))) throw NumericalError("update overflowed in " + params[i].name);
  }
}

}  // namespace shiftdet
