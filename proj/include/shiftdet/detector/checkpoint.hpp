// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Named-array archive. Layout (little-endian):
//   "SDCK" u32 version
//   u32 len, fingerprint bytes
//   u32 len, metadata JSON bytes
//   u32 array count, then per array:
//     u32 len, name bytes; u32 ndim, i32 dims[ndim]; u8 dtype (4 = f32, 8 = f64);
//     u64 count; raw values

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/nn/params.hpp"

namespace shiftdet {

template <typename S>
struct Archive {
  std::string fingerprint;
  nlohmann::json meta = nlohmann::json::object();
  ParamSet<S> arrays;
};

namespace detail {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated archive " + path);
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& path) {
  const auto n = get<std::uint32_t>(in, path);
  if (n > (1u << 28)) throw DataError("corrupt archive " + path);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("truncated archive " + path);
  return s;
}

}  // namespace detail

// Written to a temporary file first and renamed into place.
template <typename S>
void save_archive(const std::filesystem::path& path, const Archive<S>& ar) {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write("SDCK", 4);
    detail::put(out, std::uint32_t{1});
    detail::put_string(out, ar.fingerprint);
    detail::put_string(out, ar.meta.dump());
    detail::put(out, static_cast<std::uint32_t>(ar.arrays.count()));
    for (const auto& a : ar.arrays) {
      detail::put_string(out, a.name);
      detail::put(out, static_cast<std::uint32_t>(a.shape.size()));
      for (int d : a.shape) detail::put(out, static_cast<std::int32_t>(d));
      detail::put(out, static_cast<std::uint8_t>(sizeof(S)));
      detail::put(out, static_cast<std::uint64_t>(a.size()));
      out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(S)));
    }
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename S>
Archive<S> load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string p = path.string();
  if (!in) throw DataError("cannot read " + p);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SDCK", 4) != 0) throw DataError("not a checkpoint archive: " + p);
  if (detail::get<std::uint32_t>(in, p) != 1) throw DataError("unsupported archive version in " + p);
  Archive<S> ar;
  ar.fingerprint = detail::get_string(in, p);
  try {
    ar.meta = nlohmann::json::parse(detail::get_string(in, p));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt archive metadata in " + p + ": " + e.what());
  }
  const auto count = detail::get<std::uint32_t>(in, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = detail::get_string(in, p);
    const auto ndim = detail::get<std::uint32_t>(in, p);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(detail::get<std::int32_t>(in, p));
    const auto dtype = detail::get<std::uint8_t>(in, p);
    const auto n = detail::get<std::uint64_t>(in, p);
    auto& arr = ar.arrays[ar.arrays.add(name, shape)];
    if (arr.size() != n) throw DataError("array " + name + " size does not match its shape in " + p);
    if (dtype == sizeof(S)) {
      if (!in.read(reinterpret_cast<char*>(arr.data()), static_cast<std::streamsize>(n * sizeof(S))))
        throw DataError("truncated archive " + p);
    } else if (dtype == 4 || dtype == 8) {
      for (auto& v : arr.values)
        v = dtype == 4 ? static_cast<S>(detail::get<float>(in, p)) : static_cast<S>(detail::get<double>(in, p));
    } else {
      throw DataError("unknown dtype in " + p);
    }
  }
  return ar;
}

// Copies `src` into `dst` with every name prefixed by `prefix` + "/".
template <typename S>
void store_prefixed(ParamSet<S>& dst, const std::string& prefix, const ParamSet<S>& src) {
  for (const auto& a : src) dst[dst.add(prefix + "/" + a.name, a.shape)].values = a.values;
}

// Reads the arrays stored under `prefix` into a copy of `layout`, checking
// every name and shape.
template <typename S>
ParamSet<S> load_prefixed(const ParamSet<S>& src, const std::string& prefix, const ParamSet<S>& layout) {
  ParamSet<S> out = layout;
  for (auto& a : out) {
    const std::string key = prefix + "/" + a.name;
    if (!src.contains(key)) throw DataError("checkpoint is missing " + key);
    const auto& s = src.at(key);
    if (s.shape != a.shape) throw DataError("checkpoint shape mismatch for " + key);
    a.values = s.values;
  }
  return out;
}

}  // namespace shiftdet
