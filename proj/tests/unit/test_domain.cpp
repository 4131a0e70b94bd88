// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "shiftdet/domain/dataset.hpp"
#include "shiftdet/domain/dataset_io.hpp"
#include "shiftdet/domain/scene.hpp"
#include "shiftdet/domain/shift.hpp"
#include "support/oracles.hpp"

namespace shiftdet {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("shiftdet_domain_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Scene, SameIndexIsBitIdentical) {
  SceneSpec spec;
  EXPECT_EQ(generate_scene(spec, 17), generate_scene(spec, 17));
  EXPECT_FALSE(generate_scene(spec, 17) == generate_scene(spec, 18));
}

TEST(Scene, ForcedSingleObject) {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 1;
  for (std::uint64_t i = 0; i < 20; ++i) EXPECT_EQ(generate_scene(spec, i).annotations.size(), 1u);
}

TEST(Scene, BoxesCoverTheirShapePixels) {
  SceneSpec spec;
  for (std::uint64_t idx = 0; idx < 50; ++idx) {
    const auto r = render_scene(spec, idx);
    const int w = r.image.pixels.width(), h = r.image.pixels.height();
    for (std::size_t k = 0; k < r.image.annotations.size(); ++k) {
      const auto& b = r.image.annotations[k].box;
      int total = 0, inside = 0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (r.owner[static_cast<std::size_t>(y) * w + x] != static_cast<int>(k)) continue;
          ++total;
          const float cx = x + 0.5f, cy = y + 0.5f;
          inside += cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2;
        }
      }
      ASSERT_GT(total, 0) << "scene " << idx << " object " << k;
      EXPECT_GE(inside, 0.9 * total) << "scene " << idx << " object " << k;
    }
  }
}

TEST(Scene, ValidateRejectsEmptyRanges) {
  SceneSpec spec;
  spec.max_objects = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.shift_severity = -1.f;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Shift, ZeroSeverityIsIdentity) {
  const auto img = generate_scene(SceneSpec{}, 3);
  const auto out = apply_domain_shift(img, {ShiftKind::kFog, 0.f});
  EXPECT_EQ(out.pixels, img.pixels);
  EXPECT_EQ(out.domain, DomainTag::kTarget);
}

TEST(Shift, HeavyFogApproachesAtmosphericLight) {
  auto img = generate_scene(SceneSpec{}, 4);
  img.depth = Plane(img.pixels.height(), img.pixels.width(), 1.f);
  const auto out = apply_domain_shift(img, {ShiftKind::kFog, 1000.f, 1.f});
  for (float v : out.pixels.data()) EXPECT_NEAR(v, 1.f, 1e-6f);
}

TEST(Shift, FogFormulaWorkedValue) {
  // 100/255 * e^-0.5 + (1 - e^-0.5), evaluated separately: 0.6313245.
  EXPECT_NEAR(fog_pixel(100.f / 255.f, 1.f, 0.5f, 1.f), 0.6313245, 1e-6);
}

TEST(Shift, PaletteSeverityZeroKeepsAllLevels) {
  EXPECT_EQ(posterize_levels(0.f), 256);
  EXPECT_LT(posterize_levels(5.f), posterize_levels(2.f));
  auto img = generate_scene(SceneSpec{}, 5);
  const auto out = apply_domain_shift(img, {ShiftKind::kPalette, 5.f});
  const int levels = posterize_levels(5.f);
  for (float v : out.pixels.data()) {
    const double k = v * (levels - 1);
    EXPECT_NEAR(k, std::round(k), 1e-4);
  }
}

TEST(Box, IouExamples) {
  const BoundingBox a{0, 0, 10, 10};
  EXPECT_EQ(box_iou(a, a), 1.f);
  EXPECT_EQ(box_iou(a, BoundingBox{20, 20, 30, 30}), 0.f);
  EXPECT_NEAR(box_iou<double>({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(testing::grid_iou({0, 0, 2, 2}, {1, 1, 3, 3}, 64), 1.0 / 7.0, 1e-12);
}

TEST(Box, IouAgreesWithGridCountOracle) {
  std::mt19937_64 g(7);
  for (int t = 0; t < 50; ++t) {
    // Integer corners so the 4-cells-per-unit grid count is exact.
    std::uniform_int_distribution<int> c(0, 12), s(1, 8);
    const int ax = c(g), ay = c(g), bx = c(g), by = c(g);
    const BoundingBox a{float(ax), float(ay), float(ax + s(g)), float(ay + s(g))};
    const BoundingBox b{float(bx), float(by), float(bx + s(g)), float(by + s(g))};
    EXPECT_NEAR(box_iou<double>(a, b), testing::grid_iou(a, b, 4), 1e-12);
  }
}

TEST(Dataset, CountsTagsAndSeparation) {
  SceneSpec spec;
  const auto data = build_experiment(spec, {100, 40, 30, true});
  EXPECT_EQ(data.source_train.size(), 100u);
  for (const auto& it : data.source_train.items) EXPECT_EQ(it.domain, DomainTag::kSource);
  for (const auto& it : data.target_train.items) EXPECT_EQ(it.domain, DomainTag::kTarget);
  ASSERT_TRUE(data.third_test);
  EXPECT_EQ(data.third_test->style, "palette");
  std::set<std::vector<float>> seen;
  std::size_t n = 0;
  for (const Dataset* ds : {&data.source_train, &data.target_train, &data.source_test, &data.target_test}) {
    for (const auto& it : ds->items) seen.insert(it.pixels.data()), ++n;
  }
  EXPECT_EQ(seen.size(), n);
}

TEST(Dataset, TargetSplitsShareTheirBrightnessDistribution) {
  SceneSpec spec;
  const auto data = build_experiment(spec, {1, 100, 100, false});
  auto mean_brightness = [](const Dataset& ds) {
    double sum = 0.0;
    for (const auto& it : ds.items) {
      double s = 0.0;
      for (float v : it.pixels.data()) s += v;
      sum += s / static_cast<double>(it.pixels.data().size());
    }
    return sum / static_cast<double>(ds.items.size());
  };
  const double a = mean_brightness(data.target_train), b = mean_brightness(data.target_test);
  EXPECT_LT(std::fabs(a - b) / b, 0.02);
}

TEST(Dataset, ThirdDomainMustDiffer) {
  SceneSpec spec;
  spec.shift_kind = ShiftKind::kPalette;
  EXPECT_THROW(build_experiment(spec, {1, 1, 1, true}), ConfigError);
}

TEST(DatasetIo, RoundTripIsExact) {
  const auto data = build_experiment(SceneSpec{}, {6, 6, 6, false});
  const auto dir = scratch_dir("roundtrip");
  for (const Dataset* ds : {&data.source_train, &data.target_train}) {
    save_dataset(*ds, dir / ds->name);
    EXPECT_EQ(load_dataset(dir / ds->name), *ds);
  }
  fs::remove_all(dir);
}

TEST(DatasetIo, SidecarKeepsLabelsOutOfTheMainFile) {
  const auto data = build_experiment(SceneSpec{}, {1, 5, 1, false});
  const auto dir = scratch_dir("sidecar");
  save_dataset(data.target_train, dir, LabelPlacement::kSidecar);
  const auto loaded = load_dataset(dir);
  for (const auto& it : loaded.items) EXPECT_TRUE(it.annotations.empty());
  EXPECT_EQ(attach_labels(loaded, load_sidecar(dir)), data.target_train);
  fs::remove_all(dir);
}

TEST(DatasetIo, EmptyAnnotationListRoundTrips) {
  Dataset ds;
  ds.name = "empty";
  ds.items.push_back({Image(32, 32, 51.f / 255.f), {}, DomainTag::kSource, std::nullopt});
  const auto dir = scratch_dir("empty");
  save_dataset(ds, dir);
  std::ifstream in(dir / kAnnotationsFile);
  std::string line;
  std::getline(in, line);
  EXPECT_NE(line.find("\"boxes\":[]"), std::string::npos);
  EXPECT_EQ(load_dataset(dir), ds);
  fs::remove_all(dir);
}

TEST(DatasetIo, CorruptRecordNamesTheLine) {
  const auto data = build_experiment(SceneSpec{}, {3, 1, 1, false});
  const auto dir = scratch_dir("corrupt");
  save_dataset(data.source_train, dir);
  std::vector<std::string> lines;
  {
    std::ifstream in(dir / kAnnotationsFile);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  lines[1] = "{\"file\": \"x.ppm\", \"domain\": 0, \"boxes\": [[1, 2, 3]]}";
  {
    std::ofstream out(dir / kAnnotationsFile);
    for (const auto& l : lines) out << l << "\n";
  }
  try {
    load_dataset(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(DatasetIo, FingerprintTracksContent) {
  auto data = build_experiment(SceneSpec{}, {4, 1, 1, false});
  const auto fp = dataset_fingerprint(data.source_train);
  EXPECT_EQ(fp, dataset_fingerprint(build_experiment(SceneSpec{}, {4, 1, 1, false}).source_train));
  data.source_train.items[0].annotations[0].label.index ^= 1;
  EXPECT_NE(fp, dataset_fingerprint(data.source_train));
}

}  // namespace
}  // namespace shiftdet
