// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/domain/image.hpp"
#include "shiftdet/domain/scene.hpp"
#include "shiftdet/domain/shift.hpp"

namespace shiftdet {

struct ExperimentData {
  Dataset source_train;
  // Annotations kept for analysis; trainers only ever see the images.
  Dataset target_train;
  Dataset source_test;
  Dataset target_test;
  std::optional<Dataset> third_test;
};

struct ExperimentSizes {
  int n_source = 200;
  int n_target = 200;
  int n_test = 100;
  bool with_third_domain = false;
};

// Stream ids keep every split on its own scene indices.
enum class SplitStream : std::uint64_t {
  kSourceTrain = 1,
  kTargetTrain = 2,
  kSourceTest = 3,
  kTargetTest = 4,
  kThirdTest = 5,
};

inline std::uint64_t scene_index(SplitStream stream, int i) {
  return (static_cast<std::uint64_t>(stream) << 32) | static_cast<std::uint32_t>(i);
}

inline Dataset make_split(const SceneSpec& spec, SplitStream stream, int count, Split split,
                          std::optional<ShiftParams> shift, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  ds.split = split;
  ds.domain = shift ? DomainTag::kTarget : DomainTag::kSource;
  ds.style = shift ? shift_kind_name(shift->kind) : "clean";
  ds.items.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    AnnotatedImage img = generate_scene(spec, scene_index(stream, i));
    if (shift) img = apply_domain_shift(img, *shift);
    quantize_to_8bit(img.pixels);
    if (img.depth) quantize_to_16bit(*img.depth);
    ds.items.push_back(std::move(img));
  }
  return ds;
}

inline ExperimentData build_experiment(const SceneSpec& spec, const ExperimentSizes& sizes) {
  spec.validate();
  if (sizes.n_source < 1 || sizes.n_target < 1 || sizes.n_test < 1)
    throw ConfigError("split sizes must be >= 1");
  const ShiftParams target{spec.shift_kind, spec.shift_severity, 1.f, spec.palette_hue_degrees};
  ExperimentData data;
  data.source_train = make_split(spec, SplitStream::kSourceTrain, sizes.n_source, Split::kTrain, std::nullopt, "source_train");
  data.target_train = make_split(spec, SplitStream::kTargetTrain, sizes.n_target, Split::kTrain, target, "target_train");
  data.source_test = make_split(spec, SplitStream::kSourceTest, sizes.n_test, Split::kTest, std::nullopt, "source_test");
  data.target_test = make_split(spec, SplitStream::kTargetTest, sizes.n_test, Split::kTest, target, "target_test");
  if (sizes.with_third_domain) {
    if (spec.third_shift_kind == spec.shift_kind)
      throw ConfigError("third domain must use a different shift kind than the target");
    const ShiftParams third{spec.third_shift_kind, spec.third_shift_severity, 1.f, spec.palette_hue_degrees};
    data.third_test = make_split(spec, SplitStream::kThirdTest, sizes.n_test, Split::kTest, third, "third_test");
  }
  return data;
}

}  // namespace shiftdet
