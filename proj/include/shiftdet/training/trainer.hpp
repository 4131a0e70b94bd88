// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Source-only burn-in and the teacher-student adaptation loop.
//
// All randomness in an iteration is derived from (seed, phase, iteration,
// role, slot), so a run resumed from a checkpoint replays exactly what the
// uninterrupted run would have done.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftdet/adversary/discriminator.hpp"
#include "shiftdet/augmentation.hpp"
#include "shiftdet/core/errors.hpp"
#include "shiftdet/core/rng.hpp"
#include "shiftdet/detector/checkpoint.hpp"
#include "shiftdet/detector/detector.hpp"
#include "shiftdet/detector/sgd.hpp"
#include "shiftdet/eval/metrics.hpp"
#include "shiftdet/training/config.hpp"
#include "shiftdet/training/data_access.hpp"
#include "shiftdet/training/objective.hpp"
#include "shiftdet/training/pseudo_labels.hpp"

namespace shiftdet {

struct IterationMetrics {
  int iteration = 0;
  DetectionLoss sup;
  double unsup = 0.0;
  double dis = 0.0;
  double lambda_unsup = 0.0;
  double lambda_dis = 0.0;
  double total = 0.0;
  std::size_t pseudo_count = 0;
  std::optional<FalsePositiveCount> fp;
  std::optional<double> teacher_map;
  std::optional<double> student_map;
  // Kept out of the serialized record so that logs of identical runs are
  // byte-identical.
  double wall_ms = 0.0;
};

inline nlohmann::json metrics_to_json(const IterationMetrics& m) {
  nlohmann::json j;
  j["iteration"] = m.iteration;
  j["rpn_cls"] = m.sup.rpn_cls;
  j["rpn_reg"] = m.sup.rpn_reg;
  j["roi_cls"] = m.sup.roi_cls;
  j["roi_reg"] = m.sup.roi_reg;
  j["sup"] = m.sup.total();
  j["unsup"] = m.unsup;
  j["dis"] = m.dis;
  j["lambda_unsup"] = m.lambda_unsup;
  j["lambda_dis"] = m.lambda_dis;
  j["total"] = m.total;
  j["pseudo_count"] = m.pseudo_count;
  if (m.fp) {
    j["fp_unmatched"] = m.fp->unmatched;
    j["fp_total"] = m.fp->total;
    j["fp_ratio"] = m.fp->ratio();
    j["fp_empty"] = m.fp->empty;
  }
  if (m.teacher_map) j["teacher_map"] = *m.teacher_map;
  if (m.student_map) j["student_map"] = *m.student_map;
  return j;
}

inline IterationMetrics metrics_from_json(const nlohmann::json& j) {
  IterationMetrics m;
  m.iteration = j.at("iteration").get<int>();
  m.sup = {j.at("rpn_cls").get<double>(), j.at("rpn_reg").get<double>(), j.at("roi_cls").get<double>(),
           j.at("roi_reg").get<double>()};
  m.unsup = j.at("unsup").get<double>();
  m.dis = j.at("dis").get<double>();
  m.lambda_unsup = j.at("lambda_unsup").get<double>();
  m.lambda_dis = j.at("lambda_dis").get<double>();
  m.total = j.at("total").get<double>();
  m.pseudo_count = j.at("pseudo_count").get<std::size_t>();
  if (j.contains("fp_total")) {
    FalsePositiveCount fp;
    fp.unmatched = j.at("fp_unmatched").get<std::size_t>();
    fp.total = j.at("fp_total").get<std::size_t>();
    fp.empty = j.at("fp_empty").get<bool>();
    m.fp = fp;
  }
  if (j.contains("teacher_map")) m.teacher_map = j.at("teacher_map").get<double>();
  if (j.contains("student_map")) m.student_map = j.at("student_map").get<double>();
  return m;
}

// Measures pseudo-label quality against target labels for analysis. The
// trainer hands it boxes in the original image frame and gets back counts
// only; nothing it reads can reach a loss.
class PseudoLabelProbe {
 public:
  PseudoLabelProbe(const Dataset& labeled_target, AccessAudit* audit, float iou_threshold = 0.5f,
                   bool raw_detections = false)
      : ds_(&labeled_target), audit_(audit), iou_(iou_threshold), raw_(raw_detections) {}

  // Score pre-threshold teacher output instead of the filtered pseudo labels.
  bool raw() const { return raw_; }

  FalsePositiveCount measure(std::size_t index, const std::vector<Detection>& boxes) const {
    if (audit_) audit_->analysis_read(ds_->name);
    return false_positive_ratio(boxes, ds_->items.at(index).annotations, iou_);
  }

 private:
  const Dataset* ds_;
  AccessAudit* audit_;
  float iou_;
  bool raw_;
};

// Walks a fixed sequence of per-epoch shuffles: position k of the stream is
// element k mod n of permutation floor(k / n).
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed, std::uint64_t stream) : n_(n), seed_(seed), stream_(stream) {}

  std::size_t at(std::uint64_t position) {
    const std::uint64_t epoch = position / n_;
    if (!cached_ || *cached_ != epoch) {
      perm_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
      Rng rng{seed_, stream_, epoch};
      for (std::size_t i = n_; i > 1; --i) std::swap(perm_[i - 1], perm_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)))]);
      cached_ = epoch;
    }
    return perm_[position % n_];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_, stream_;
  std::optional<std::uint64_t> cached_;
  std::vector<std::size_t> perm_;
};

namespace detail {

enum Phase : std::uint64_t { kPhasePretrain = 1, kPhaseAdapt = 2 };
enum Role : std::uint64_t {
  kSourceWeak = 1,
  kSourceStrong = 2,
  kTeacherWeak = 3,
  kStudentWeak = 4,
  kStudentStrong = 5,
  kSourceBatch = 6,
  kTargetBatch = 7,
};

inline std::uint64_t aug_seed(std::uint64_t seed, Phase phase, int iteration, Role role, std::size_t slot) {
  return derive_seed({seed, phase, static_cast<std::uint64_t>(iteration), role, slot});
}

inline std::string dump(const IterationMetrics& m) {
  std::ostringstream os;
  os << "iteration " << m.iteration << ": rpn_cls=" << m.sup.rpn_cls << " rpn_reg=" << m.sup.rpn_reg
     << " roi_cls=" << m.sup.roi_cls << " roi_reg=" << m.sup.roi_reg << " unsup=" << m.unsup << " dis=" << m.dis
     << " total=" << m.total;
  return os.str();
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Checks that a weak view's pixels are what its recorded transform says.
// A view whose flip flag disagrees with its pixels would silently pair
// pseudo boxes with mirrored objects.
inline void verify_view_geometry(const AnnotatedImage& original, const WeakView& view) {
  if (view.transform.scale != 1.f) return;
  const Image expected = view.transform.flipped ? flip_horizontal(original.pixels) : original.pixels;
  if (!(expected == view.image.pixels)) throw std::logic_error("weak view pixels disagree with the recorded flip");
}

template <class State>
struct RunHooks {
  int eval_every = 0;
  // mAP of a parameter set on held-out data.
  std::function<double(const ParamSet<float>&)> evaluate;
  std::function<void(const State&, const IterationMetrics&)> after_iteration;
};

// ---------------------------------------------------------------------------
// Burn-in

struct PretrainState {
  ParamSet<float> params;
  ParamSet<float> velocity;
  int iteration = 0;
};

inline PretrainState start_pretrain(const Detector<float>& det, std::uint64_t seed) {
  PretrainState st;
  st.params = det.init_params(derive_seed({seed, 0x1417}));
  st.velocity = st.params.zeros_like();
  return st;
}

// Supervised training on one labeled pool until `iterations` steps have been
// taken in total. Used for the burn-in, the source-only baseline and the
// target oracle.
inline std::vector<IterationMetrics> pretrain(const Detector<float>& det, const TrainConfig& cfg,
                                              const WeakAugConfig& weak, const StrongAugConfig& strong,
                                              const LabeledPool& pool, PretrainState& st, int iterations,
                                              const RunHooks<PretrainState>& hooks = {}) {
  cfg.validate();
  EpochSampler sampler(pool.size(), cfg.seed, detail::kSourceBatch);
  std::vector<IterationMetrics> log;
  const auto batch = static_cast<std::size_t>(cfg.batch_source);
  while (st.iteration < iterations) {
    const auto t0 = std::chrono::steady_clock::now();
    const int it = st.iteration;
    std::vector<AnnotatedImage> views;
    for (std::size_t j = 0; j < batch; ++j) {
      const auto& item = pool.get(sampler.at(static_cast<std::uint64_t>(it) * batch + j));
      auto w = weak_augment(item, weak, detail::aug_seed(cfg.seed, detail::kPhasePretrain, it, detail::kSourceWeak, j));
      views.push_back(cfg.pretrain_strong_aug
                          ? strong_augment(w.image, strong,
                                           detail::aug_seed(cfg.seed, detail::kPhasePretrain, it, detail::kSourceStrong, j))
                          : std::move(w.image));
    }
    std::vector<const AnnotatedImage*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    ParamSet<float> grad = st.params.zeros_like();
    IterationMetrics m;
    m.iteration = it;
    m.sup = det.supervised_loss(st.params, ptrs, &grad);
    m.total = total_loss(m.sup.total(), 0.0, 0.0, 0.0, 0.0);
    if (!std::isfinite(m.total)) throw NumericalError("non-finite loss during burn-in, " + detail::dump(m));
    sgd_step(st.params, grad, st.velocity, cfg.sgd());
    ++st.iteration;
    if (hooks.eval_every > 0 && hooks.evaluate && st.iteration % hooks.eval_every == 0)
      m.student_map = hooks.evaluate(st.params);
    m.wall_ms = detail::elapsed_ms(t0);
    if (hooks.after_iteration) hooks.after_iteration(st, m);
    log.push_back(m);
  }
  return log;
}

inline Archive<float> pretrain_archive(const Detector<float>& det, const PretrainState& st) {
  Archive<float> ar;
  ar.fingerprint = det.config().fingerprint();
  ar.meta["kind"] = "pretrain";
  ar.meta["iteration"] = st.iteration;
  store_prefixed(ar.arrays, "detector", st.params);
  store_prefixed(ar.arrays, "optim/velocity", st.velocity);
  return ar;
}

inline PretrainState pretrain_from_archive(const Detector<float>& det, const Archive<float>& ar) {
  if (ar.fingerprint != det.config().fingerprint())
    throw DataError("checkpoint was written for a different detector architecture");
  PretrainState st;
  const auto layout = det.zero_params();
  st.params = load_prefixed(ar.arrays, "detector", layout);
  st.velocity = ar.arrays.contains("optim/velocity/" + layout[0].name) ? load_prefixed(ar.arrays, "optim/velocity", layout)
                                                                        : layout.zeros_like();
  st.iteration = ar.meta.value("iteration", 0);
  return st;
}

// ---------------------------------------------------------------------------
// Adaptation

struct TrainerState {
  ParamSet<float> teacher;
  ParamSet<float> student;
  ParamSet<float> disc;
  ParamSet<float> student_velocity;
  ParamSet<float> disc_velocity;
  int iteration = 0;
};

class AdaptiveTrainer {
 public:
  AdaptiveTrainer(DetectorConfig det_cfg, DiscriminatorConfig disc_cfg, TrainConfig cfg, WeakAugConfig weak = {},
                  StrongAugConfig strong = {})
      : det_(std::move(det_cfg)), disc_(disc_cfg), cfg_(cfg), weak_(weak), strong_(strong) {
    cfg_.validate();
    weak_.validate();
    strong_.validate();
    if (disc_cfg.in_channels != det_.config().feature_channels())
      throw ConfigError("discriminator input channels must match the encoder output");
  }

  const Detector<float>& detector() const { return det_; }
  const Discriminator<float>& discriminator() const { return disc_; }
  const TrainConfig& config() const { return cfg_; }

  std::string fingerprint() const {
    return det_.config().fingerprint() + ";disc" + std::to_string(disc_.config().in_channels) + "/" +
           std::to_string(disc_.config().hidden);
  }

  // Teacher and student start as copies of the initial detector.
  TrainerState start(const ParamSet<float>& init) const {
    if (!init.same_layout(det_.zero_params())) throw ConfigError("initial parameters do not fit the detector");
    auto [teacher, student] = duplicate(init);
    TrainerState st;
    st.teacher = std::move(teacher);
    st.student = std::move(student);
    st.disc = disc_.init_params(derive_seed({cfg_.seed, 0xd15c}));
    st.student_velocity = st.student.zeros_like();
    st.disc_velocity = st.disc.zeros_like();
    return st;
  }

  // The model whose accuracy is reported. Without mutual learning there is
  // no teacher, so the student stands in.
  const ParamSet<float>& reported_model(const TrainerState& st) const {
    return cfg_.disable_mutual ? st.student : st.teacher;
  }

  // One iteration: pseudo labels from the teacher on weak target views,
  // student losses on strong views of both domains, one SGD step for the
  // student and the discriminator, then the EMA update of the teacher.
  // target_ids are indices into the target pool, used only by the probe.
  IterationMetrics train_iteration(TrainerState& st, const std::vector<const AnnotatedImage*>& source,
                                   const std::vector<const AnnotatedImage*>& target,
                                   const std::vector<std::size_t>& target_ids = {},
                                   const PseudoLabelProbe* probe = nullptr) const {
    const auto t0 = std::chrono::steady_clock::now();
    const bool use_dis = !cfg_.disable_dis, use_mutual = !cfg_.disable_mutual;
    if (source.empty()) throw ConfigError("source batch is empty");
    if ((use_dis || use_mutual) && target.empty()) throw ConfigError("target batch is empty");
    if (probe && target_ids.size() != target.size()) throw ConfigError("probe needs one index per target image");
    const int it = st.iteration;
    const auto seed = [&](detail::Role r, std::size_t slot) {
      return detail::aug_seed(cfg_.seed, detail::kPhaseAdapt, it, r, slot);
    };

    IterationMetrics m;
    m.iteration = it;
    m.lambda_unsup = use_mutual ? cfg_.lambda_unsup : 0.0;
    m.lambda_dis = use_dis ? cfg_.lambda_dis : 0.0;

    // Views and pseudo labels.
    std::vector<AnnotatedImage> src_views;
    for (std::size_t j = 0; j < source.size(); ++j) {
      auto w = weak_augment(*source[j], weak_, seed(detail::kSourceWeak, j));
      src_views.push_back(strong_augment(w.image, strong_, seed(detail::kSourceStrong, j)));
    }
    std::vector<AnnotatedImage> tgt_views;
    std::vector<std::vector<Detection>> pseudo(target.size());
    const bool need_target = use_dis || use_mutual;
    if (need_target) {
      std::optional<FalsePositiveCount> fp;
      const ViewTransform identity{det_.config().image_size, det_.config().image_size};
      for (std::size_t k = 0; k < target.size(); ++k) {
        const auto sw = weak_augment(*target[k], weak_, seed(detail::kStudentWeak, k));
        tgt_views.push_back(strong_augment(sw.image, strong_, seed(detail::kStudentStrong, k)));
        if (!use_mutual) continue;
        // The teacher runs inference only: no trace, no gradient buffers.
        const Image* teacher_input = &tgt_views.back().pixels;
        ViewTransform teacher_view = sw.transform;
        std::optional<WeakView> tw;
        if (!cfg_.disable_ws_aug) {
          tw = weak_augment(*target[k], weak_, seed(detail::kTeacherWeak, k));
          if (cfg_.debug_checks) verify_view_geometry(*target[k], *tw);
          teacher_input = &tw->image.pixels;
          teacher_view = tw->transform;
        }
        const auto labels = det_.detect(st.teacher, *teacher_input, cfg_.confidence_threshold, cfg_.nms_iou);
        pseudo[k] = transfer_between_views(labels, teacher_view, sw.transform);
        m.pseudo_count += pseudo[k].size();
        if (probe) {
          const auto& scored = probe->raw() ? det_.detect(st.teacher, *teacher_input, 0.f, cfg_.nms_iou) : labels;
          const auto c = probe->measure(target_ids[k], transfer_between_views(scored, teacher_view, identity));
          if (fp) *fp += c; else fp = c;
        }
      }
      m.fp = fp;
    }

    // Student forward and head losses.
    ParamSet<float> grad = st.student.zeros_like();
    std::vector<EncoderTrace<float>> traces;
    std::vector<Tensor<float>> dfeats;
    traces.reserve(src_views.size() + tgt_views.size());
    const float w_sup = 1.f / static_cast<float>(source.size());
    for (const auto& v : src_views) {
      traces.push_back(det_.encode_trace(st.student, v.pixels));
      const auto& f = traces.back().features();
      dfeats.emplace_back(f.channels, f.height, f.width);
      m.sup += det_.head_loss(st.student, f, v.annotations, HeadTerms::kSupervised, w_sup, &grad, &dfeats.back())
                   .scaled(1.0 / static_cast<double>(source.size()));
    }
    const float w_unsup = static_cast<float>(cfg_.lambda_unsup) / static_cast<float>(std::max<std::size_t>(1, target.size()));
    for (std::size_t k = 0; k < tgt_views.size(); ++k) {
      traces.push_back(det_.encode_trace(st.student, tgt_views[k].pixels));
      const auto& f = traces.back().features();
      dfeats.emplace_back(f.channels, f.height, f.width);
      if (use_mutual)
        m.unsup += pseudo_label_head_loss(det_, st.student, f, pseudo[k], w_unsup, &grad, &dfeats.back()).total() /
                   static_cast<double>(target.size());
    }

    // Adversarial term through the reversal layer.
    ParamSet<float> grad_disc;
    if (use_dis) {
      grad_disc = st.disc.zeros_like();
      std::vector<const EncoderTrace<float>*> s_tr, t_tr;
      for (std::size_t i = 0; i < source.size(); ++i) s_tr.push_back(&traces[i]);
      for (std::size_t i = source.size(); i < traces.size(); ++i) t_tr.push_back(&traces[i]);
      const auto adv = adversarial_contribution(disc_, st.disc, s_tr, t_tr, static_cast<float>(cfg_.lambda_dis),
                                                GrlSpec{cfg_.grl_coefficient}, grad_disc);
      m.dis = adv.loss;
      for (std::size_t i = 0; i < source.size(); ++i) add_into(dfeats[i], adv.source_grad[i]);
      for (std::size_t i = 0; i < t_tr.size(); ++i) add_into(dfeats[source.size() + i], adv.target_grad[i]);
    }

    m.total = total_loss(m.sup.total(), m.unsup, m.dis, m.lambda_unsup, m.lambda_dis);
    if (!std::isfinite(m.total)) throw NumericalError("non-finite loss during adaptation, " + detail::dump(m));

    for (std::size_t i = 0; i < traces.size(); ++i)
      det_.encoder_backward(st.student, traces[i], std::move(dfeats[i]), grad);

    const auto sgd = cfg_.sgd();
    sgd_step(st.student, grad, st.student_velocity, sgd);
    if (use_dis) sgd_step(st.disc, grad_disc, st.disc_velocity, sgd);
    if (use_mutual) ema_update(st.teacher, st.student, cfg_.ema_alpha);
    ++st.iteration;
    m.wall_ms = detail::elapsed_ms(t0);
    return m;
  }

  // Runs iterations until config().adapt_iterations have been taken in
  // total, so a state restored from a checkpoint simply continues.
  std::vector<IterationMetrics> adapt(TrainerState& st, const LabeledPool& source, const UnlabeledPool& target,
                                      const RunHooks<TrainerState>& hooks = {},
                                      const PseudoLabelProbe* probe = nullptr) const {
    EpochSampler src_sampler(source.size(), cfg_.seed, detail::kSourceBatch + 0x100);
    EpochSampler tgt_sampler(target.size(), cfg_.seed, detail::kTargetBatch + 0x100);
    const auto bs = static_cast<std::size_t>(cfg_.batch_source), bt = static_cast<std::size_t>(cfg_.batch_target);
    const bool need_target = !cfg_.disable_dis || !cfg_.disable_mutual;
    std::vector<IterationMetrics> log;
    while (st.iteration < cfg_.adapt_iterations) {
      const auto it = static_cast<std::uint64_t>(st.iteration);
      std::vector<const AnnotatedImage*> src, tgt;
      std::vector<std::size_t> ids;
      for (std::size_t j = 0; j < bs; ++j) src.push_back(&source.get(src_sampler.at(it * bs + j)));
      if (need_target) {
        for (std::size_t k = 0; k < bt; ++k) {
          ids.push_back(tgt_sampler.at(it * bt + k));
          tgt.push_back(&target.get(ids.back()));
        }
      }
      IterationMetrics m = train_iteration(st, src, tgt, ids, probe);
      if (hooks.eval_every > 0 && hooks.evaluate && st.iteration % hooks.eval_every == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        if (!cfg_.disable_mutual) m.teacher_map = hooks.evaluate(st.teacher);
        m.student_map = hooks.evaluate(st.student);
        m.wall_ms += detail::elapsed_ms(t0);
      }
      if (hooks.after_iteration) hooks.after_iteration(st, m);
      log.push_back(m);
    }
    return log;
  }

  Archive<float> to_archive(const TrainerState& st) const {
    Archive<float> ar;
    ar.fingerprint = fingerprint();
    ar.meta["kind"] = "adapt";
    ar.meta["iteration"] = st.iteration;
    store_prefixed(ar.arrays, "teacher", st.teacher);
    store_prefixed(ar.arrays, "student", st.student);
    store_prefixed(ar.arrays, "discriminator", st.disc);
    store_prefixed(ar.arrays, "optim/student_velocity", st.student_velocity);
    store_prefixed(ar.arrays, "optim/discriminator_velocity", st.disc_velocity);
    return ar;
  }

  TrainerState from_archive(const Archive<float>& ar) const {
    if (ar.fingerprint != fingerprint()) throw DataError("checkpoint was written for a different architecture");
    const auto det_layout = det_.zero_params();
    const auto disc_layout = disc_.zero_params();
    TrainerState st;
    st.teacher = load_prefixed(ar.arrays, "teacher", det_layout);
    st.student = load_prefixed(ar.arrays, "student", det_layout);
    st.disc = load_prefixed(ar.arrays, "discriminator", disc_layout);
    st.student_velocity = load_prefixed(ar.arrays, "optim/student_velocity", det_layout);
    st.disc_velocity = load_prefixed(ar.arrays, "optim/discriminator_velocity", disc_layout);
    st.iteration = ar.meta.at("iteration").get<int>();
    return st;
  }

 private:
  static void add_into(Tensor<float>& dst, const Tensor<float>& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
  }

  Detector<float> det_;
  Discriminator<float> disc_;
  TrainConfig cfg_;
  WeakAugConfig weak_;
  StrongAugConfig strong_;
};

}  // namespace shiftdet
