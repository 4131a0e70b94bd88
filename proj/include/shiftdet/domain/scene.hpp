// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/core/rng.hpp"
#include "shiftdet/domain/box.hpp"
#include "shiftdet/domain/image.hpp"

namespace shiftdet {

enum class ShiftKind { kFog, kPalette };

inline const char* shift_kind_name(ShiftKind k) { return k == ShiftKind::kFog ? "fog" : "palette"; }

inline ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "fog") return ShiftKind::kFog;
  if (s == "palette") return ShiftKind::kPalette;
  throw ConfigError("unknown shift kind '" + s + "' (expected fog or palette)");
}

// Class indices rendered by the generator.
enum ShapeClass : int { kCircle = 0, kSquare = 1, kTriangle = 2 };

struct SceneSpec {
  int image_size = 64;
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 4;
  int min_object_scale = 10;
  int max_object_scale = 24;
  // Objects draw their hue from [object_hue_min, object_hue_max] degrees.
  float object_hue_min = 0.f;
  float object_hue_max = 90.f;
  // Background: low-frequency texture around a random gray level.
  float background_min = 0.25f;
  float background_max = 0.55f;
  float texture_amplitude = 0.08f;
  float noise_sigma = 0.02f;
  // Elongated bars that are not objects of any class.
  int max_clutter = 2;
  ShiftKind shift_kind = ShiftKind::kFog;
  float shift_severity = 1.5f;
  float palette_hue_degrees = 90.f;
  // Unseen third domain used by the generalization protocol.
  ShiftKind third_shift_kind = ShiftKind::kPalette;
  float third_shift_severity = 5.f;
  std::uint64_t seed = 1;

  void validate() const {
    if (image_size < 32) throw ConfigError("image_size must be >= 32");
    if (num_classes < 1 || num_classes > 3) throw ConfigError("num_classes must be in [1, 3]");
    if (min_objects < 1 || max_objects < min_objects) throw ConfigError("objects_per_image range is empty");
    if (min_object_scale < 4 || max_object_scale < min_object_scale)
      throw ConfigError("object_scale range is empty");
    if (max_object_scale > image_size) throw ConfigError("object scale exceeds image_size");
    if (background_max < background_min) throw ConfigError("background range is empty");
    if (shift_severity < 0.f || third_shift_severity < 0.f) throw ConfigError("shift severity must be >= 0");
  }
};

// Per-pixel owner map: object index into annotations, -1 for background.
struct SceneRender {
  AnnotatedImage image;
  std::vector<int> owner;
};

namespace detail {

inline std::array<float, 3> hsv_to_rgb(float h_deg, float s, float v) {
  float h = std::fmod(h_deg, 360.f);
  if (h < 0.f) h += 360.f;
  const float c = v * s;
  const float hp = h / 60.f;
  const float x = c * (1.f - std::fabs(std::fmod(hp, 2.f) - 1.f));
  float r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const float m = v - c;
  return {r + m, g + m, b + m};
}

inline bool inside_shape(int cls, float px, float py, float cx, float cy, float size) {
  const float half = 0.5f * size;
  switch (cls) {
    case kCircle: {
      const float dx = px - cx, dy = py - cy;
      return dx * dx + dy * dy <= half * half;
    }
    case kSquare:
      return std::fabs(px - cx) <= half && std::fabs(py - cy) <= half;
    default: {
      // Upright isosceles triangle: apex at top-center, base at the bottom.
      const float top = cy - half, bottom = cy + half;
      if (py < top || py > bottom) return false;
      const float t = (py - top) / size;
      return std::fabs(px - cx) <= t * half;
    }
  }
}

}  // namespace detail

// Renders scene `index` of `spec`. The result is a pure function of
// (spec, index); annotation boxes are tight around the visible pixels of
// each shape, and the depth plane is far at the top and near at the bottom
// with each object at its own constant depth.
inline SceneRender render_scene(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  Rng rng{spec.seed, 0x5ce4e, index};
  const int n = spec.image_size;
  SceneRender out;
  auto& img = out.image;
  img.pixels = Image(n, n);
  img.domain = DomainTag::kSource;
  Plane depth(n, n);
  out.owner.assign(static_cast<std::size_t>(n) * n, -1);

  // Background texture.
  const float base = static_cast<float>(rng.uniform(spec.background_min, spec.background_max));
  std::array<float, 3> tint{};
  for (auto& t : tint) t = static_cast<float>(rng.uniform(-0.05, 0.05));
  struct Wave { float fx, fy, phase, amp; };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w.fx = static_cast<float>(rng.uniform(0.5, 3.0)) * 6.2831853f / n;
    w.fy = static_cast<float>(rng.uniform(0.5, 3.0)) * 6.2831853f / n;
    w.phase = static_cast<float>(rng.uniform(0.0, 6.2831853));
    w.amp = spec.texture_amplitude * static_cast<float>(rng.uniform(0.3, 1.0));
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      float tex = 0.f;
      for (const auto& w : waves) tex += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
      for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = base + tint[c] + tex;
      depth.at(y, x) = 1.f - 0.6f * (static_cast<float>(y) + 0.5f) / n;
    }
  }

  // Clutter bars share the object palette but never form a class shape.
  const int clutter = spec.max_clutter > 0 ? rng.uniform_int(0, spec.max_clutter) : 0;
  for (int i = 0; i < clutter; ++i) {
    const bool horizontal = rng.bernoulli(0.5);
    const int len = rng.uniform_int(spec.min_object_scale, spec.max_object_scale);
    const int thick = rng.uniform_int(2, 3);
    const int w = horizontal ? len : thick, h = horizontal ? thick : len;
    const int x0 = rng.uniform_int(0, n - w), y0 = rng.uniform_int(0, n - h);
    const auto rgb = detail::hsv_to_rgb(
        static_cast<float>(rng.uniform(spec.object_hue_min, spec.object_hue_max)),
        static_cast<float>(rng.uniform(0.5, 1.0)), static_cast<float>(rng.uniform(0.5, 0.9)));
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = rgb[c];
  }

  // Objects, rejecting placements that overlap an earlier object too much.
  const int wanted = rng.uniform_int(spec.min_objects, spec.max_objects);
  std::vector<BoundingBox> placed;
  std::vector<int> classes;
  for (int i = 0; i < wanted; ++i) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      const int cls = rng.uniform_int(0, spec.num_classes - 1);
      const int size = rng.uniform_int(spec.min_object_scale, spec.max_object_scale);
      const float cx = static_cast<float>(rng.uniform(0.5 * size, n - 0.5 * size));
      const float cy = static_cast<float>(rng.uniform(0.5 * size, n - 0.5 * size));
      const float hue = static_cast<float>(rng.uniform(spec.object_hue_min, spec.object_hue_max));
      const float sat = static_cast<float>(rng.uniform(0.6, 1.0));
      const float val = static_cast<float>(rng.uniform(0.65, 1.0));
      const float obj_depth = static_cast<float>(rng.uniform(0.3, 0.8));
      const BoundingBox extent{cx - 0.5f * size, cy - 0.5f * size, cx + 0.5f * size, cy + 0.5f * size};
      bool clash = false;
      for (const auto& p : placed) {
        const float iw = std::min(extent.x2, p.x2) - std::max(extent.x1, p.x1);
        const float ih = std::min(extent.y2, p.y2) - std::max(extent.y1, p.y1);
        if (iw > 0.f && ih > 0.f) clash = clash || iw * ih > 0.2f * std::min(extent.area(), p.area());
      }
      if (clash) continue;
      const auto rgb = detail::hsv_to_rgb(hue, sat, val);
      const int id = static_cast<int>(placed.size());
      for (int y = std::max(0, static_cast<int>(extent.y1) - 1); y < std::min(n, static_cast<int>(extent.y2) + 2); ++y) {
        for (int x = std::max(0, static_cast<int>(extent.x1) - 1); x < std::min(n, static_cast<int>(extent.x2) + 2); ++x) {
          if (!detail::inside_shape(cls, x + 0.5f, y + 0.5f, cx, cy, static_cast<float>(size))) continue;
          for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = rgb[c];
          depth.at(y, x) = obj_depth;
          out.owner[static_cast<std::size_t>(y) * n + x] = id;
        }
      }
      placed.push_back(extent);
      classes.push_back(cls);
      break;
    }
  }

  // Pixel noise, then tight boxes over what is actually visible.
  for (auto& v : img.pixels.data()) v += static_cast<float>(spec.noise_sigma * rng.normal());
  for (auto& v : img.pixels.data()) v = std::clamp(v, 0.f, 1.f);
  std::vector<int> remap(placed.size(), -1);
  for (std::size_t id = 0; id < placed.size(); ++id) {
    int x1 = n, y1 = n, x2 = -1, y2 = -1;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (out.owner[static_cast<std::size_t>(y) * n + x] != static_cast<int>(id)) continue;
        x1 = std::min(x1, x), y1 = std::min(y1, y), x2 = std::max(x2, x), y2 = std::max(y2, y);
      }
    }
    if (x2 < 0) continue;
    remap[id] = static_cast<int>(img.annotations.size());
    img.annotations.push_back({BoundingBox{static_cast<float>(x1), static_cast<float>(y1),
                                           static_cast<float>(x2 + 1), static_cast<float>(y2 + 1)},
                               ClassLabel{classes[id]}});
  }
  for (auto& o : out.owner)
    if (o >= 0) o = remap[static_cast<std::size_t>(o)];
  img.depth = std::move(depth);
  return out;
}

inline AnnotatedImage generate_scene(const SceneSpec& spec, std::uint64_t index) {
  return render_scene(spec, index).image;
}

}  // namespace shiftdet
