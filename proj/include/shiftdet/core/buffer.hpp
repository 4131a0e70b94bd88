// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <Eigen/Core>

namespace shiftdet {

// Storage for anything handed to Eigen. Every buffer starts on the widest
// vector boundary, so Eigen's alignment peeling (and with it the order of
// floating-point sums) does not depend on where the heap placed the array.
template <typename S>
using Buffer = std::vector<S, Eigen::aligned_allocator<S>>;

}  // namespace shiftdet
