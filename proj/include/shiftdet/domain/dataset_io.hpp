// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// On-disk dataset layout, one directory per split:
//
//   meta.json           name, split, domain, style, count
//   annotations.jsonl   {"file": ..., "domain": 0|1, "boxes": [[x1,y1,x2,y2,cls], ...]}
//   sidecar.jsonl       same record shape; held-out target labels
//   img_NNNNN.ppm       8-bit binary RGB raster
//   img_NNNNN.depth     16-bit binary PGM depth raster
//
// When a split is written with its labels held out, annotations.jsonl
// carries empty box lists and the real boxes go to sidecar.jsonl only.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/domain/image.hpp"

namespace shiftdet {

namespace fs = std::filesystem;

enum class LabelPlacement { kInline, kSidecar };

inline constexpr const char* kAnnotationsFile = "annotations.jsonl";
inline constexpr const char* kSidecarFile = "sidecar.jsonl";
inline constexpr const char* kMetaFile = "meta.json";

class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void add(const T& v) { add_bytes(&v, sizeof(T)); }
  std::uint64_t value() const { return hash_; }
  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash_;
    return os.str();
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

// Content fingerprint over pixels (8-bit), domain tags and annotations.
inline std::string dataset_fingerprint(const Dataset& ds) {
  Fnv1a h;
  h.add(static_cast<std::uint64_t>(ds.items.size()));
  for (const auto& item : ds.items) {
    h.add(static_cast<std::uint8_t>(domain_value(item.domain)));
    for (float v : item.pixels.data()) h.add(static_cast<std::uint8_t>(std::lround(v * 255.f)));
    h.add(static_cast<std::uint64_t>(item.annotations.size()));
    for (const auto& a : item.annotations) {
      h.add(a.box.x1), h.add(a.box.y1), h.add(a.box.x2), h.add(a.box.y2);
      h.add(a.label.index);
    }
  }
  return h.hex();
}

namespace detail {

inline std::string item_file(std::size_t i) {
  std::ostringstream os;
  os << "img_" << std::setw(5) << std::setfill('0') << i << ".ppm";
  return os.str();
}

inline std::string depth_file(const std::string& image_file) {
  return image_file.substr(0, image_file.size() - 4) + ".depth";
}

// Reads "P6"/"P5" headers: magic, width, height, maxval, single whitespace.
inline void read_pnm_header(std::istream& in, const std::string& magic, int& w, int& h, int& maxval,
                            const fs::path& path) {
  std::string m;
  in >> m;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  in.get();
  if (!in || m != magic || w <= 0 || h <= 0)
    throw DataError("bad raster header in " + path.string());
}

inline void write_ppm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(img.at(c, y, x), 0.f, 1.f) * 255.f));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

inline Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  int w = 0, h = 0, maxval = 0;
  read_pnm_header(in, "P6", w, h, maxval, path);
  if (maxval != 255) throw DataError("expected 8-bit raster in " + path.string());
  Image img(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
      throw DataError("truncated raster " + path.string());
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(row[static_cast<std::size_t>(x) * 3 + c]) / 255.f;
  }
  return img;
}

inline void write_pgm16(const fs::path& path, const Plane& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << p.width() << " " << p.height() << "\n65535\n";
  for (float v : p.data()) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.f, 1.f) * 65535.f));
    const unsigned char be[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
    out.write(reinterpret_cast<const char*>(be), 2);
  }
}

inline Plane read_pgm16(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  int w = 0, h = 0, maxval = 0;
  read_pnm_header(in, "P5", w, h, maxval, path);
  if (maxval != 65535) throw DataError("expected 16-bit depth raster in " + path.string());
  Plane p(h, w);
  for (auto& v : p.data()) {
    unsigned char be[2];
    if (!in.read(reinterpret_cast<char*>(be), 2)) throw DataError("truncated depth raster " + path.string());
    v = static_cast<float>((static_cast<unsigned>(be[0]) << 8) | be[1]) / 65535.f;
  }
  return p;
}

inline nlohmann::json record_json(const std::string& file, DomainTag domain, const std::vector<Annotation>& anns) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& a : anns) boxes.push_back({a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.label.index});
  return {{"file", file}, {"domain", domain_value(domain)}, {"boxes", boxes}};
}

struct Record {
  std::string file;
  DomainTag domain = DomainTag::kSource;
  std::vector<Annotation> annotations;
};

inline Record parse_record(const std::string& line, std::size_t line_no, const fs::path& path) {
  auto fail = [&](const std::string& why) {
    return DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed annotation record (") + e.what() + ")");
  }
  if (!j.is_object() || !j.contains("file") || !j["file"].is_string() || !j.contains("domain") ||
      !j.contains("boxes") || !j["boxes"].is_array())
    throw fail("record must have string 'file', 'domain' and array 'boxes'");
  Record r;
  r.file = j["file"].get<std::string>();
  const auto& d = j["domain"];
  if (!d.is_number_integer() || (d.get<int>() != 0 && d.get<int>() != 1)) throw fail("domain must be 0 or 1");
  r.domain = d.get<int>() == 1 ? DomainTag::kTarget : DomainTag::kSource;
  for (const auto& b : j["boxes"]) {
    if (!b.is_array() || b.size() != 5) throw fail("box must be [x1, y1, x2, y2, cls]");
    for (std::size_t k = 0; k < 4; ++k)
      if (!b[k].is_number()) throw fail("box coordinates must be numbers");
    if (!b[4].is_number_integer() || b[4].get<int>() < 0) throw fail("box class must be a nonnegative integer");
    Annotation a{{b[0].get<float>(), b[1].get<float>(), b[2].get<float>(), b[3].get<float>()}, {b[4].get<int>()}};
    if (!a.box.valid()) throw fail("box must satisfy x1 < x2 and y1 < y2");
    r.annotations.push_back(a);
  }
  return r;
}

inline std::vector<Record> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, line_no, path));
  }
  return out;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const fs::path& dir, LabelPlacement placement = LabelPlacement::kInline) {
  fs::create_directories(dir);
  std::ofstream ann(dir / kAnnotationsFile);
  std::ofstream side;
  if (placement == LabelPlacement::kSidecar) side.open(dir / kSidecarFile);
  if (!ann || (placement == LabelPlacement::kSidecar && !side)) throw DataError("cannot write annotations in " + dir.string());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& item = ds.items[i];
    const std::string file = detail::item_file(i);
    detail::write_ppm(dir / file, item.pixels);
    if (item.depth) detail::write_pgm16(dir / detail::depth_file(file), *item.depth);
    if (placement == LabelPlacement::kSidecar) {
      ann << detail::record_json(file, item.domain, {}).dump() << "\n";
      side << detail::record_json(file, item.domain, item.annotations).dump() << "\n";
    } else {
      ann << detail::record_json(file, item.domain, item.annotations).dump() << "\n";
    }
  }
  const nlohmann::json meta = {{"name", ds.name},
                               {"split", split_name(ds.split)},
                               {"domain", domain_value(ds.domain)},
                               {"style", ds.style},
                               {"count", ds.items.size()},
                               {"labels", placement == LabelPlacement::kSidecar ? "sidecar" : "inline"},
                               {"fingerprint", dataset_fingerprint(ds)}};
  std::ofstream(dir / kMetaFile) << meta.dump(2) << "\n";
}

// Loads images and the inline annotations. Splits saved with held-out
// labels come back with empty annotation lists.
inline Dataset load_dataset(const fs::path& dir) {
  std::ifstream meta_in(dir / kMetaFile);
  if (!meta_in) throw DataError("missing " + (dir / kMetaFile).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed " + (dir / kMetaFile).string() + ": " + e.what());
  }
  Dataset ds;
  ds.name = meta.value("name", "");
  ds.split = meta.value("split", "train") == "test" ? Split::kTest : Split::kTrain;
  ds.domain = meta.value("domain", 0) == 1 ? DomainTag::kTarget : DomainTag::kSource;
  ds.style = meta.value("style", "clean");
  for (auto& rec : detail::read_records(dir / kAnnotationsFile)) {
    AnnotatedImage item;
    item.pixels = detail::read_ppm(dir / rec.file);
    item.domain = rec.domain;
    item.annotations = std::move(rec.annotations);
    if (item.domain != ds.domain) throw DataError("record " + rec.file + " has a domain tag different from its split");
    const auto depth = dir / detail::depth_file(rec.file);
    if (fs::exists(depth)) item.depth = detail::read_pgm16(depth);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

// Held-out labels of a split saved with LabelPlacement::kSidecar, in item
// order.
inline std::vector<std::vector<Annotation>> load_sidecar(const fs::path& dir) {
  std::vector<std::vector<Annotation>> out;
  for (auto& rec : detail::read_records(dir / kSidecarFile)) out.push_back(std::move(rec.annotations));
  return out;
}

inline Dataset attach_labels(Dataset ds, const std::vector<std::vector<Annotation>>& labels) {
  if (labels.size() != ds.items.size()) throw DataError("sidecar length does not match split size");
  for (std::size_t i = 0; i < labels.size(); ++i) ds.items[i].annotations = labels[i];
  return ds;
}

}  // namespace shiftdet
