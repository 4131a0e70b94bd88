// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "shiftdet/domain/box.hpp"

namespace shiftdet {

// Planar RGB image, values in [0, 1]. Plane c starts at c * height * width.
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.f)
      : height_(height), width_(width), data_(3 * static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

  float& at(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Single-channel map, e.g. synthetic scene depth in [0, 1].
class Plane {
 public:
  Plane() = default;
  Plane(int height, int width, float fill = 0.f)
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

struct AnnotatedImage {
  Image pixels;
  std::vector<Annotation> annotations;
  DomainTag domain = DomainTag::kSource;
  std::optional<Plane> depth;

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

enum class Split { kTrain, kTest };

inline const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

struct Dataset {
  std::string name;
  Split split = Split::kTrain;
  DomainTag domain = DomainTag::kSource;
  // Appearance family of the items: "clean", "fog", "palette".
  std::string style = "clean";
  std::vector<AnnotatedImage> items;

  std::size_t size() const { return items.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Rounds every value onto the 8-bit grid k/255, which is what the on-disk
// raster format stores.
inline void quantize_to_8bit(Image& img) {
  for (auto& v : img.data()) v = std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f;
}

inline void quantize_to_16bit(Plane& p) {
  for (auto& v : p.data()) v = std::round(std::clamp(v, 0.f, 1.f) * 65535.f) / 65535.f;
}

}  // namespace shiftdet
