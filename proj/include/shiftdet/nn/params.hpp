// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shiftdet/core/buffer.hpp"
#include "shiftdet/core/errors.hpp"

namespace shiftdet {

template <typename S>
struct ParamArray {
  std::string name;
  std::vector<int> shape;
  Buffer<S> values;

  std::size_t size() const { return values.size(); }
  S* data() { return values.data(); }
  const S* data() const { return values.data(); }
};

// Ordered collection of named arrays. Order is fixed at construction and
// shared by parameters, gradients, momentum buffers and checkpoints.
template <typename S>
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<int> shape) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    const auto n = static_cast<std::size_t>(
        std::accumulate(shape.begin(), shape.end(), std::ptrdiff_t{1}, std::multiplies<>()));
    index_.emplace(name, arrays_.size());
    arrays_.push_back({std::move(name), std::move(shape), Buffer<S>(n, S(0))});
    return arrays_.size() - 1;
  }

  std::size_t count() const { return arrays_.size(); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& a : arrays_) n += a.size();
    return n;
  }

  ParamArray<S>& operator[](std::size_t i) { return arrays_[i]; }
  const ParamArray<S>& operator[](std::size_t i) const { return arrays_[i]; }

  ParamArray<S>& at(std::string_view name) { return arrays_[index_of(name)]; }
  const ParamArray<S>& at(std::string_view name) const { return arrays_[index_of(name)]; }
  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown parameter " + std::string(name));
    return it->second;
  }

  auto begin() { return arrays_.begin(); }
  auto end() { return arrays_.end(); }
  auto begin() const { return arrays_.begin(); }
  auto end() const { return arrays_.end(); }

  // Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out = *this;
    out.set_zero();
    return out;
  }

  void set_zero() {
    for (auto& a : arrays_) std::fill(a.values.begin(), a.values.end(), S(0));
  }

  bool same_layout(const ParamSet& other) const {
    if (other.arrays_.size() != arrays_.size()) return false;
    for (std::size_t i = 0; i < arrays_.size(); ++i)
      if (arrays_[i].name != other.arrays_[i].name || arrays_[i].shape != other.arrays_[i].shape) return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& a : arrays_)
      for (S v : a.values)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  ParamSet<T> cast() const {
    ParamSet<T> out;
    for (const auto& a : arrays_) {
      auto& dst = out[out.add(a.name, a.shape)];
      for (std::size_t i = 0; i < a.size(); ++i) dst.values[i] = static_cast<T>(a.values[i]);
    }
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (!a.same_layout(b)) return false;
    for (std::size_t i = 0; i < a.arrays_.size(); ++i)
      if (a.arrays_[i].values != b.arrays_[i].values) return false;
    return true;
  }

 private:
  std::vector<ParamArray<S>> arrays_;
  std::unordered_map<std::string, std::size_t> index_;
};

// out += scale * in, over matching layouts.
template <typename S>
void accumulate(ParamSet<S>& out, const ParamSet<S>& in, S scale = S(1)) {
  for (std::size_t i = 0; i < out.count(); ++i) {
    auto& o = out[i].values;
    const auto& v = in[i].values;
    for (std::size_t k = 0; k < o.size(); ++k) o[k] += scale * v[k];
  }
}

}  // namespace shiftdet
