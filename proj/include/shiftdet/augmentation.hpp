// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Weak (geometric: flip, optional crop) and strong (photometric plus cutout)
// augmentation. Both are pure functions of (image, config, seed).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/core/rng.hpp"
#include "shiftdet/domain/box.hpp"
#include "shiftdet/domain/image.hpp"

namespace shiftdet {

struct WeakAugConfig {
  float flip_probability = 0.5f;
  bool crop_enabled = false;
  // Side of the crop window relative to the image side.
  float crop_fraction = 0.85f;

  void validate() const {
    if (flip_probability < 0.f || flip_probability > 1.f) throw ConfigError("flip_probability must be in [0,1]");
    if (crop_fraction <= 0.f || crop_fraction > 1.f) throw ConfigError("crop_fraction must be in (0,1]");
  }
};

struct StrongAugConfig {
  // Brightness, contrast and saturation factors are drawn from [1 - m, 1 + m].
  float jitter_magnitude = 0.4f;
  float jitter_probability = 0.8f;
  float grayscale_probability = 0.2f;
  float blur_probability = 0.5f;
  float blur_sigma_min = 0.1f;
  float blur_sigma_max = 2.0f;
  int cutout_min = 1;
  int cutout_max = 3;
  int cutout_size_min = 4;
  int cutout_size_max = 12;
  float fill_value = 0.5f;

  void validate() const {
    for (float p : {jitter_probability, grayscale_probability, blur_probability})
      if (p < 0.f || p > 1.f) throw ConfigError("augmentation probabilities must be in [0,1]");
    if (jitter_magnitude < 0.f || jitter_magnitude > 1.f) throw ConfigError("jitter_magnitude must be in [0,1]");
    if (blur_sigma_min <= 0.f || blur_sigma_max < blur_sigma_min) throw ConfigError("blur sigma range is empty");
    if (cutout_min < 0 || cutout_max < cutout_min) throw ConfigError("cutout count range is empty");
    if (cutout_size_min < 1 || cutout_size_max < cutout_size_min) throw ConfigError("cutout size range is empty");
  }

  // Every stochastic component switched off.
  static StrongAugConfig identity() {
    StrongAugConfig c;
    c.jitter_magnitude = 0.f;
    c.jitter_probability = 0.f;
    c.grayscale_probability = 0.f;
    c.blur_probability = 0.f;
    c.cutout_min = c.cutout_max = 0;
    return c;
  }
};

// Geometry of a weak view relative to its source image: crop window
// (offset, scale back to full size), then optional mirror.
struct ViewTransform {
  int width = 0;
  int height = 0;
  bool flipped = false;
  float crop_x0 = 0.f;
  float crop_y0 = 0.f;
  float scale = 1.f;

  BoundingBox forward(const BoundingBox& b) const {
    BoundingBox r{(b.x1 - crop_x0) * scale, (b.y1 - crop_y0) * scale, (b.x2 - crop_x0) * scale,
                  (b.y2 - crop_y0) * scale};
    r = clip_box(r, static_cast<float>(width), static_cast<float>(height));
    return flipped ? mirror_box(r, static_cast<float>(width)) : r;
  }

  BoundingBox inverse(const BoundingBox& b) const {
    const BoundingBox r = flipped ? mirror_box(b, static_cast<float>(width)) : b;
    return {r.x1 / scale + crop_x0, r.y1 / scale + crop_y0, r.x2 / scale + crop_x0, r.y2 / scale + crop_y0};
  }
};

struct WeakView {
  AnnotatedImage image;
  ViewTransform transform;
  bool flipped() const { return transform.flipped; }
};

inline Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
  return out;
}

namespace detail {

inline Image crop_resize(const Image& img, float x0, float y0, float side_x, float side_y) {
  const int h = img.height(), w = img.width();
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    const float sy = std::clamp(y0 + (y + 0.5f) * side_y / h - 0.5f, 0.f, static_cast<float>(h - 1));
    const int iy = std::min(static_cast<int>(sy), h - 2 < 0 ? 0 : h - 2);
    const float fy = sy - iy;
    for (int x = 0; x < w; ++x) {
      const float sx = std::clamp(x0 + (x + 0.5f) * side_x / w - 0.5f, 0.f, static_cast<float>(w - 1));
      const int ix = std::min(static_cast<int>(sx), w - 2 < 0 ? 0 : w - 2);
      const float fx = sx - ix;
      for (int c = 0; c < 3; ++c) {
        const float a = img.at(c, iy, ix), b = img.at(c, iy, ix + 1);
        const float d = img.at(c, iy + 1, ix), e = img.at(c, iy + 1, ix + 1);
        out.at(c, y, x) = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * d + fx * e);
      }
    }
  }
  return out;
}

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

}  // namespace detail

inline WeakView weak_augment(const AnnotatedImage& img, const WeakAugConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng{seed, 0x7ea4};
  WeakView view{img, {img.pixels.width(), img.pixels.height()}};
  auto& t = view.transform;
  if (cfg.crop_enabled && cfg.crop_fraction < 1.f) {
    const float side_x = cfg.crop_fraction * t.width, side_y = cfg.crop_fraction * t.height;
    t.crop_x0 = std::floor(static_cast<float>(rng.uniform(0.0, t.width - side_x)));
    t.crop_y0 = std::floor(static_cast<float>(rng.uniform(0.0, t.height - side_y)));
    t.scale = 1.f / cfg.crop_fraction;
    view.image.pixels = detail::crop_resize(img.pixels, t.crop_x0, t.crop_y0, side_x, side_y);
    view.image.depth.reset();
    std::vector<Annotation> kept;
    for (const auto& a : img.annotations) {
      const BoundingBox b = clip_box({(a.box.x1 - t.crop_x0) * t.scale, (a.box.y1 - t.crop_y0) * t.scale,
                                      (a.box.x2 - t.crop_x0) * t.scale, (a.box.y2 - t.crop_y0) * t.scale},
                                     static_cast<float>(t.width), static_cast<float>(t.height));
      if (b.width() >= 2.f && b.height() >= 2.f) kept.push_back({b, a.label});
    }
    view.image.annotations = std::move(kept);
  }
  if (rng.bernoulli(cfg.flip_probability)) {
    t.flipped = true;
    view.image.pixels = flip_horizontal(view.image.pixels);
    if (view.image.depth) {
      Plane d(view.image.depth->height(), view.image.depth->width());
      for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x) d.at(y, x) = view.image.depth->at(y, d.width() - 1 - x);
      view.image.depth = std::move(d);
    }
    for (auto& a : view.image.annotations) a.box = mirror_box(a.box, static_cast<float>(t.width));
  }
  return view;
}

// Separable Gaussian blur with reflect-101 borders, kernel radius ceil(3 sigma).
inline Image gaussian_blur(const Image& img, float sigma) {
  const int h = img.height(), w = img.width();
  const int radius = std::max(1, static_cast<int>(std::ceil(3.f * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  float total = 0.f;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5f * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& k : kernel) k /= total;
  Image tmp(h, w), out(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float acc = 0.f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(c, y, detail::reflect_index(x + k, w));
        tmp.at(c, y, x) = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float acc = 0.f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(c, detail::reflect_index(y + k, h), x);
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

struct CutoutRect {
  int x0, y0, w, h;
};

// What strong_augment actually did; handy for tests and debugging.
struct StrongAugRecord {
  bool jittered = false;
  bool grayscale = false;
  float blur_sigma = 0.f;
  std::vector<CutoutRect> cutouts;
};

inline AnnotatedImage strong_augment(const AnnotatedImage& img, const StrongAugConfig& cfg, std::uint64_t seed,
                                     StrongAugRecord* record = nullptr) {
  cfg.validate();
  Rng rng{seed, 0x57c0};
  AnnotatedImage out = img;
  auto& px = out.pixels;
  const int h = px.height(), w = px.width();
  const auto n = px.plane_size();
  auto& d = px.data();
  StrongAugRecord rec;

  auto luma = [&](std::size_t i) { return 0.299f * d[i] + 0.587f * d[n + i] + 0.114f * d[2 * n + i]; };

  if (cfg.jitter_magnitude > 0.f && rng.bernoulli(cfg.jitter_probability)) {
    rec.jittered = true;
    const float m = cfg.jitter_magnitude;
    const float brightness = static_cast<float>(rng.uniform(1.0 - m, 1.0 + m));
    const float contrast = static_cast<float>(rng.uniform(1.0 - m, 1.0 + m));
    const float saturation = static_cast<float>(rng.uniform(1.0 - m, 1.0 + m));
    for (auto& v : d) v = std::clamp(v * brightness, 0.f, 1.f);
    float mean = 0.f;
    for (std::size_t i = 0; i < n; ++i) mean += luma(i);
    mean /= static_cast<float>(n);
    for (auto& v : d) v = std::clamp(mean + (v - mean) * contrast, 0.f, 1.f);
    for (std::size_t i = 0; i < n; ++i) {
      const float g = luma(i);
      for (int c = 0; c < 3; ++c) d[c * n + i] = std::clamp(g + (d[c * n + i] - g) * saturation, 0.f, 1.f);
    }
  }
  if (rng.bernoulli(cfg.grayscale_probability)) {
    rec.grayscale = true;
    for (std::size_t i = 0; i < n; ++i) {
      const float g = luma(i);
      d[i] = d[n + i] = d[2 * n + i] = g;
    }
  }
  if (rng.bernoulli(cfg.blur_probability)) {
    rec.blur_sigma = static_cast<float>(rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));
    px = gaussian_blur(px, rec.blur_sigma);
  }
  const int cutouts = cfg.cutout_max > 0 ? rng.uniform_int(cfg.cutout_min, cfg.cutout_max) : 0;
  for (int k = 0; k < cutouts; ++k) {
    const int cw = std::min(w, rng.uniform_int(cfg.cutout_size_min, cfg.cutout_size_max));
    const int ch = std::min(h, rng.uniform_int(cfg.cutout_size_min, cfg.cutout_size_max));
    const int x0 = rng.uniform_int(0, w - cw), y0 = rng.uniform_int(0, h - ch);
    rec.cutouts.push_back({x0, y0, cw, ch});
    for (int c = 0; c < 3; ++c)
      for (int y = y0; y < y0 + ch; ++y)
        for (int x = x0; x < x0 + cw; ++x) px.at(c, y, x) = cfg.fill_value;
  }
  for (auto& v : px.data()) v = std::clamp(v, 0.f, 1.f);
  if (record) *record = std::move(rec);
  return out;
}

}  // namespace shiftdet
