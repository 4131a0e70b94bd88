// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/domain/image.hpp"
#include "shiftdet/domain/scene.hpp"

namespace shiftdet {

struct ShiftParams {
  ShiftKind kind = ShiftKind::kFog;
  float severity = 0.f;
  float atmospheric_light = 1.f;
  float palette_hue_degrees = 90.f;
};

// Atmospheric scattering: I' = I * t + L * (1 - t), t = exp(-beta * depth).
inline float fog_pixel(float value, float depth, float beta, float light) {
  const float t = std::exp(-beta * depth);
  return value * t + light * (1.f - t);
}

// Number of posterization levels per channel for a palette severity.
// Severity 0 keeps all 256 levels of an 8-bit image.
inline int posterize_levels(float severity) {
  const double levels = std::round(256.0 / std::exp2(static_cast<double>(severity)));
  return static_cast<int>(std::clamp(levels, 2.0, 256.0));
}

namespace detail {

// Hue rotation in RGB space via Rodrigues rotation about the gray axis.
inline void rotate_hue(float& r, float& g, float& b, float degrees) {
  const float a = degrees * 3.14159265358979f / 180.f;
  const float c = std::cos(a), s = std::sin(a);
  const float k = (1.f - c) / 3.f, q = s / std::sqrt(3.f);
  const float m00 = c + k, m01 = k - q, m02 = k + q;
  const float nr = m00 * r + m01 * g + m02 * b;
  const float ng = m02 * r + m00 * g + m01 * b;
  const float nb = m01 * r + m02 * g + m00 * b;
  r = nr, g = ng, b = nb;
}

}  // namespace detail

// Photometric domain shift; annotations and depth pass through untouched and
// the domain tag becomes target.
inline AnnotatedImage apply_domain_shift(const AnnotatedImage& img, const ShiftParams& p) {
  if (p.severity < 0.f) throw ConfigError("shift severity must be >= 0");
  AnnotatedImage out = img;
  out.domain = DomainTag::kTarget;
  auto& px = out.pixels;
  const int h = px.height(), w = px.width();
  if (p.kind == ShiftKind::kFog) {
    if (!img.depth) throw DataError("fog shift requires a depth map");
    if (p.severity == 0.f) return out;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          px.at(c, y, x) = fog_pixel(px.at(c, y, x), img.depth->at(y, x), p.severity, p.atmospheric_light);
    return out;
  }
  const int levels = posterize_levels(p.severity);
  const float step = static_cast<float>(levels - 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float r = px.at(0, y, x), g = px.at(1, y, x), b = px.at(2, y, x);
      detail::rotate_hue(r, g, b, p.palette_hue_degrees);
      float* ch[3] = {&r, &g, &b};
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(*ch[c], 0.f, 1.f);
        px.at(c, y, x) = std::round(v * step) / step;
      }
    }
  }
  return out;
}

}  // namespace shiftdet
