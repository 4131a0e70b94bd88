// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration: one JSON document with a schema version.
// Every field is optional and falls back to its default; unknown keys are
// errors so that typos never silently run the default.

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/domain/dataset.hpp"
#include "shiftdet/eval/experiment.hpp"

namespace shiftdet {

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  SceneSpec scene;
  ExperimentSizes sizes;
  ExperimentSetup setup;
  AblationSettings ablation;
  std::string output_dir = "experiment";
  int checkpoint_every = 500;

  void validate() const {
    scene.validate();
    setup.detector.validate();
    setup.train.validate();
    setup.weak.validate();
    setup.strong.validate();
    if (scene.image_size != setup.detector.image_size)
      throw ConfigError("scene.image_size and detector.image_size must agree");
    if (scene.num_classes != setup.detector.num_classes)
      throw ConfigError("scene.num_classes and detector.num_classes must agree");
    if (setup.discriminator.in_channels != setup.detector.feature_channels())
      throw ConfigError("discriminator.in_channels must equal the last encoder channel count");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (setup.eval_every < 0) throw ConfigError("eval.every must be >= 0");
    if (sizes.n_source < 1 || sizes.n_target < 1 || sizes.n_test < 1) throw ConfigError("split sizes must be >= 1");
  }
};

namespace detail {

// Reads known keys out of one JSON object and remembers which were used.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  void get_shift(const char* key, ShiftKind& dst) {
    std::string s = shift_kind_name(dst);
    get(key, s);
    dst = parse_shift_kind(s);
  }

  bool has(const char* key) const { return j_.contains(key); }

  FieldReader child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return FieldReader(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where() + "." + it.key());
  }

 private:
  std::string where() const { return path_; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& sc = c.scene;
  const auto& d = c.setup.detector;
  const auto& t = c.setup.train;
  const auto& w = c.setup.weak;
  const auto& s = c.setup.strong;
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["output_dir"] = c.output_dir;
  j["checkpoint_every"] = c.checkpoint_every;
  j["scene"] = {{"image_size", sc.image_size},
                {"num_classes", sc.num_classes},
                {"min_objects", sc.min_objects},
                {"max_objects", sc.max_objects},
                {"min_object_scale", sc.min_object_scale},
                {"max_object_scale", sc.max_object_scale},
                {"object_hue_min", sc.object_hue_min},
                {"object_hue_max", sc.object_hue_max},
                {"background_min", sc.background_min},
                {"background_max", sc.background_max},
                {"texture_amplitude", sc.texture_amplitude},
                {"noise_sigma", sc.noise_sigma},
                {"max_clutter", sc.max_clutter},
                {"shift_kind", shift_kind_name(sc.shift_kind)},
                {"shift_severity", sc.shift_severity},
                {"palette_hue_degrees", sc.palette_hue_degrees},
                {"third_shift_kind", shift_kind_name(sc.third_shift_kind)},
                {"third_shift_severity", sc.third_shift_severity},
                {"seed", sc.seed}};
  j["sizes"] = {{"source_train", c.sizes.n_source},
                {"target_train", c.sizes.n_target},
                {"test", c.sizes.n_test},
                {"third_domain", c.sizes.with_third_domain}};
  j["detector"] = {{"image_size", d.image_size},
                   {"num_classes", d.num_classes},
                   {"channels", d.channels},
                   {"strides", d.strides},
                   {"anchor_scales", d.anchor_scales},
                   {"roi_pool", d.roi_pool},
                   {"roi_hidden", d.roi_hidden},
                   {"rpn_positive_iou", d.rpn_positive_iou},
                   {"rpn_negative_iou", d.rpn_negative_iou},
                   {"roi_positive_iou", d.roi_positive_iou},
                   {"roi_samples", d.roi_samples},
                   {"roi_positive_fraction", d.roi_positive_fraction},
                   {"train_proposals", d.train_proposals},
                   {"test_proposals", d.test_proposals},
                   {"rpn_nms_iou", d.rpn_nms_iou},
                   {"max_detections", d.max_detections}};
  j["discriminator"] = {{"in_channels", c.setup.discriminator.in_channels},
                        {"hidden", c.setup.discriminator.hidden}};
  j["train"] = {{"lambda_unsup", t.lambda_unsup},
                {"lambda_dis", t.lambda_dis},
                {"confidence_threshold", t.confidence_threshold},
                {"ema_alpha", t.ema_alpha},
                {"lr", t.lr},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"burn_in_iterations", t.burn_in_iterations},
                {"adapt_iterations", t.adapt_iterations},
                {"batch_source", t.batch_source},
                {"batch_target", t.batch_target},
                {"nms_iou", t.nms_iou},
                {"grl_coefficient", t.grl_coefficient},
                {"seed", t.seed},
                {"disable_dis", t.disable_dis},
                {"disable_ws_aug", t.disable_ws_aug},
                {"disable_mutual", t.disable_mutual},
                {"pretrain_strong_aug", t.pretrain_strong_aug},
                {"debug_checks", t.debug_checks}};
  j["weak_aug"] = {{"flip_probability", w.flip_probability},
                   {"crop_enabled", w.crop_enabled},
                   {"crop_fraction", w.crop_fraction}};
  j["strong_aug"] = {{"jitter_magnitude", s.jitter_magnitude},
                     {"jitter_probability", s.jitter_probability},
                     {"grayscale_probability", s.grayscale_probability},
                     {"blur_probability", s.blur_probability},
                     {"blur_sigma_min", s.blur_sigma_min},
                     {"blur_sigma_max", s.blur_sigma_max},
                     {"cutout_min", s.cutout_min},
                     {"cutout_max", s.cutout_max},
                     {"cutout_size_min", s.cutout_size_min},
                     {"cutout_size_max", s.cutout_size_max},
                     {"fill_value", s.fill_value}};
  j["eval"] = {{"every", c.setup.eval_every},
               {"score_threshold", c.setup.eval.score_threshold},
               {"nms_iou", c.setup.eval.nms_iou},
               {"iou_threshold", c.setup.eval.iou_threshold}};
  j["ablation"] = {{"rows", c.ablation.rows},
                   {"lambda_sweep", c.ablation.lambda_sweep},
                   {"probe_pseudo_labels", c.ablation.probe_pseudo_labels}};
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::FieldReader root(j, "config");
  int version = -1;
  root.get("schema_version", version);
  if (version != kConfigSchemaVersion)
    throw ConfigError("config.schema_version must be " + std::to_string(kConfigSchemaVersion));
  root.get("output_dir", c.output_dir);
  root.get("checkpoint_every", c.checkpoint_every);
  {
    auto r = root.child("scene");
    auto& sc = c.scene;
    r.get("image_size", sc.image_size);
    r.get("num_classes", sc.num_classes);
    r.get("min_objects", sc.min_objects);
    r.get("max_objects", sc.max_objects);
    r.get("min_object_scale", sc.min_object_scale);
    r.get("max_object_scale", sc.max_object_scale);
    r.get("object_hue_min", sc.object_hue_min);
    r.get("object_hue_max", sc.object_hue_max);
    r.get("background_min", sc.background_min);
    r.get("background_max", sc.background_max);
    r.get("texture_amplitude", sc.texture_amplitude);
    r.get("noise_sigma", sc.noise_sigma);
    r.get("max_clutter", sc.max_clutter);
    r.get_shift("shift_kind", sc.shift_kind);
    r.get("shift_severity", sc.shift_severity);
    r.get("palette_hue_degrees", sc.palette_hue_degrees);
    r.get_shift("third_shift_kind", sc.third_shift_kind);
    r.get("third_shift_severity", sc.third_shift_severity);
    r.get("seed", sc.seed);
    r.finish();
  }
  {
    auto r = root.child("sizes");
    r.get("source_train", c.sizes.n_source);
    r.get("target_train", c.sizes.n_target);
    r.get("test", c.sizes.n_test);
    r.get("third_domain", c.sizes.with_third_domain);
    r.finish();
  }
  {
    auto r = root.child("detector");
    auto& d = c.setup.detector;
    r.get("image_size", d.image_size);
    r.get("num_classes", d.num_classes);
    r.get("channels", d.channels);
    r.get("strides", d.strides);
    r.get("anchor_scales", d.anchor_scales);
    r.get("roi_pool", d.roi_pool);
    r.get("roi_hidden", d.roi_hidden);
    r.get("rpn_positive_iou", d.rpn_positive_iou);
    r.get("rpn_negative_iou", d.rpn_negative_iou);
    r.get("roi_positive_iou", d.roi_positive_iou);
    r.get("roi_samples", d.roi_samples);
    r.get("roi_positive_fraction", d.roi_positive_fraction);
    r.get("train_proposals", d.train_proposals);
    r.get("test_proposals", d.test_proposals);
    r.get("rpn_nms_iou", d.rpn_nms_iou);
    r.get("max_detections", d.max_detections);
    r.finish();
  }
  {
    auto r = root.child("discriminator");
    c.setup.discriminator.in_channels = c.setup.detector.feature_channels();
    r.get("in_channels", c.setup.discriminator.in_channels);
    r.get("hidden", c.setup.discriminator.hidden);
    r.finish();
  }
  {
    auto r = root.child("train");
    auto& t = c.setup.train;
    r.get("lambda_unsup", t.lambda_unsup);
    r.get("lambda_dis", t.lambda_dis);
    r.get("confidence_threshold", t.confidence_threshold);
    r.get("ema_alpha", t.ema_alpha);
    r.get("lr", t.lr);
    r.get("momentum", t.momentum);
    r.get("weight_decay", t.weight_decay);
    r.get("burn_in_iterations", t.burn_in_iterations);
    r.get("adapt_iterations", t.adapt_iterations);
    r.get("batch_source", t.batch_source);
    r.get("batch_target", t.batch_target);
    r.get("nms_iou", t.nms_iou);
    r.get("grl_coefficient", t.grl_coefficient);
    r.get("seed", t.seed);
    r.get("disable_dis", t.disable_dis);
    r.get("disable_ws_aug", t.disable_ws_aug);
    r.get("disable_mutual", t.disable_mutual);
    r.get("pretrain_strong_aug", t.pretrain_strong_aug);
    r.get("debug_checks", t.debug_checks);
    r.finish();
  }
  {
    auto r = root.child("weak_aug");
    auto& w = c.setup.weak;
    r.get("flip_probability", w.flip_probability);
    r.get("crop_enabled", w.crop_enabled);
    r.get("crop_fraction", w.crop_fraction);
    r.finish();
  }
  {
    auto r = root.child("strong_aug");
    auto& s = c.setup.strong;
    r.get("jitter_magnitude", s.jitter_magnitude);
    r.get("jitter_probability", s.jitter_probability);
    r.get("grayscale_probability", s.grayscale_probability);
    r.get("blur_probability", s.blur_probability);
    r.get("blur_sigma_min", s.blur_sigma_min);
    r.get("blur_sigma_max", s.blur_sigma_max);
    r.get("cutout_min", s.cutout_min);
    r.get("cutout_max", s.cutout_max);
    r.get("cutout_size_min", s.cutout_size_min);
    r.get("cutout_size_max", s.cutout_size_max);
    r.get("fill_value", s.fill_value);
    r.finish();
  }
  {
    auto r = root.child("eval");
    r.get("every", c.setup.eval_every);
    r.get("score_threshold", c.setup.eval.score_threshold);
    r.get("nms_iou", c.setup.eval.nms_iou);
    r.get("iou_threshold", c.setup.eval.iou_threshold);
    r.finish();
  }
  {
    auto r = root.child("ablation");
    r.get("rows", c.ablation.rows);
    r.get("lambda_sweep", c.ablation.lambda_sweep);
    r.get("probe_pseudo_labels", c.ablation.probe_pseudo_labels);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace shiftdet
