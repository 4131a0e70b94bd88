// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace shiftdet {

// Axis-aligned box in pixel units, origin top-left, (x1, y1) inclusive
// corner and (x2, y2) exclusive corner.
struct BoundingBox {
  float x1 = 0.f;
  float y1 = 0.f;
  float x2 = 0.f;
  float y2 = 0.f;

  float width() const { return x2 - x1; }
  float height() const { return y2 - y1; }
  float area() const { return std::max(0.f, width()) * std::max(0.f, height()); }
  float center_x() const { return 0.5f * (x1 + x2); }
  float center_y() const { return 0.5f * (y1 + y2); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Foreground class index in [0, K). Background is never a ClassLabel.
struct ClassLabel {
  int index = 0;
  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

enum class DomainTag : std::uint8_t { kSource = 0, kTarget = 1 };

inline int domain_value(DomainTag d) { return d == DomainTag::kTarget ? 1 : 0; }

struct Annotation {
  BoundingBox box;
  ClassLabel label;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Detection {
  BoundingBox box;
  ClassLabel label;
  float score = 0.f;
  friend bool operator==(const Detection&, const Detection&) = default;
};

// Intersection over union. Degenerate (zero-area) boxes give 0.
template <typename S = float>
S box_iou(const BoundingBox& a, const BoundingBox& b) {
  const S iw = std::min<S>(a.x2, b.x2) - std::max<S>(a.x1, b.x1);
  const S ih = std::min<S>(a.y2, b.y2) - std::max<S>(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return S(0);
  const S inter = iw * ih;
  const S uni = S(a.area()) + S(b.area()) - inter;
  return uni > 0 ? inter / uni : S(0);
}

inline BoundingBox clip_box(const BoundingBox& b, float width, float height) {
  return {std::clamp(b.x1, 0.f, width), std::clamp(b.y1, 0.f, height),
          std::clamp(b.x2, 0.f, width), std::clamp(b.y2, 0.f, height)};
}

// Horizontal reflection about the vertical center line of an image of the
// given width.
inline BoundingBox mirror_box(const BoundingBox& b, float width) {
  return {width - b.x2, b.y1, width - b.x1, b.y2};
}

}  // namespace shiftdet
