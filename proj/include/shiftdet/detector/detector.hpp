// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Compact two-stage detector: conv encoder to stride 8, an RPN with square
// anchors, and an ROI head on bilinear crop-resized features. All losses
// come with hand-written backward passes; the scalar type is a template
// parameter so the same code runs in float for training and in double for
// gradient checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/core/rng.hpp"
#include "shiftdet/detector/box_ops.hpp"
#include "shiftdet/domain/box.hpp"
#include "shiftdet/domain/image.hpp"
#include "shiftdet/nn/layers.hpp"
#include "shiftdet/nn/params.hpp"

namespace shiftdet {

struct DetectorConfig {
  int image_size = 64;
  int num_classes = 3;
  std::vector<int> channels{16, 32, 64, 64};
  std::vector<int> strides{2, 2, 2, 1};
  std::vector<float> anchor_scales{8.f, 16.f, 32.f};
  int roi_pool = 4;
  int roi_hidden = 64;
  float rpn_positive_iou = 0.7f;
  float rpn_negative_iou = 0.3f;
  float roi_positive_iou = 0.5f;
  int roi_samples = 64;
  float roi_positive_fraction = 0.25f;
  int train_proposals = 64;
  int test_proposals = 32;
  float rpn_nms_iou = 0.7f;
  int max_detections = 20;

  int stride() const {
    int s = 1;
    for (int v : strides) s *= v;
    return s;
  }
  int feature_size() const { return image_size / stride(); }
  int num_anchors_per_cell() const { return static_cast<int>(anchor_scales.size()); }
  int feature_channels() const { return channels.back(); }

  void validate() const {
    if (channels.empty() || channels.size() != strides.size()) throw ConfigError("channels/strides mismatch");
    if (image_size % stride() != 0) throw ConfigError("image_size must be divisible by the encoder stride");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (anchor_scales.empty()) throw ConfigError("need at least one anchor scale");
    if (roi_pool < 1 || roi_hidden < 1) throw ConfigError("bad ROI head size");
    if (roi_samples < 1 || roi_positive_fraction <= 0.f || roi_positive_fraction > 1.f)
      throw ConfigError("bad ROI sampling config");
  }

  // Canonical description of everything that determines parameter shapes.
  std::string fingerprint() const {
    std::ostringstream os;
    os << "img" << image_size << ";k" << num_classes << ";ch";
    for (std::size_t i = 0; i < channels.size(); ++i) os << channels[i] << "/" << strides[i] << ",";
    os << ";anchors";
    for (float s : anchor_scales) os << s << ",";
    os << ";pool" << roi_pool << ";hidden" << roi_hidden;
    return os.str();
  }

  // Tiny architecture for finite-difference checks (~1.5k parameters).
  static DetectorConfig micro() {
    DetectorConfig c;
    c.image_size = 32;
    c.channels = {4, 4, 4, 4};
    c.anchor_scales = {8.f, 16.f};
    c.roi_pool = 2;
    c.roi_hidden = 8;
    c.roi_samples = 16;
    c.train_proposals = 12;
    c.test_proposals = 12;
    return c;
  }
};

struct Proposal {
  BoundingBox box;
  float objectness = 0.f;  // logit
};

// Per-image loss terms; each is an average over its own sample set.
struct DetectionLoss {
  double rpn_cls = 0.0;
  double rpn_reg = 0.0;
  double roi_cls = 0.0;
  double roi_reg = 0.0;

  double total() const { return rpn_cls + rpn_reg + roi_cls + roi_reg; }
  DetectionLoss& operator+=(const DetectionLoss& o) {
    rpn_cls += o.rpn_cls, rpn_reg += o.rpn_reg, roi_cls += o.roi_cls, roi_reg += o.roi_reg;
    return *this;
  }
  DetectionLoss scaled(double s) const { return {rpn_cls * s, rpn_reg * s, roi_cls * s, roi_reg * s}; }
};

enum class HeadTerms {
  kSupervised,          // classification and box regression for RPN and ROI
  kClassificationOnly,  // pseudo-label training: no regression terms
};

// Anchor labels: 1 positive, 0 negative, -1 ignored.
struct AnchorAssignment {
  std::vector<int> label;
  std::vector<int> matched;  // ground-truth index for positives, else -1
};

// IoU >= positive -> positive, IoU < negative -> negative, in between
// ignored. Each ground-truth box also claims its best-overlapping anchors.
inline AnchorAssignment assign_anchors(const std::vector<BoundingBox>& anchors, const std::vector<Annotation>& gt,
                                       float positive_iou, float negative_iou) {
  AnchorAssignment a;
  a.label.assign(anchors.size(), 0);
  a.matched.assign(anchors.size(), -1);
  if (gt.empty()) return a;
  std::vector<float> best_for_gt(gt.size(), 0.f);
  std::vector<float> best_iou(anchors.size(), 0.f);
  std::vector<int> best_gt(anchors.size(), -1);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const float iou = box_iou(anchors[i], gt[g].box);
      if (iou > best_iou[i]) best_iou[i] = iou, best_gt[i] = static_cast<int>(g);
      best_for_gt[g] = std::max(best_for_gt[g], iou);
    }
  }
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (best_iou[i] >= positive_iou) {
      a.label[i] = 1;
      a.matched[i] = best_gt[i];
    } else if (best_iou[i] >= negative_iou) {
      a.label[i] = -1;
    }
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (best_for_gt[g] <= 0.f) continue;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (box_iou(anchors[i], gt[g].box) == best_for_gt[g]) {
        a.label[i] = 1;
        a.matched[i] = static_cast<int>(g);
      }
    }
  }
  return a;
}

// ROI training sample: proposal box, class target (-1 = background) and the
// matched ground truth for positives.
struct RoiSample {
  BoundingBox box;
  int label = -1;
  int matched = -1;
};

// Labels candidates against ground truth and takes up to `max_samples`,
// at most `positive_fraction` of them positive. Candidates are taken in
// their given order (descending objectness, ground-truth boxes last).
inline std::vector<RoiSample> sample_rois(const std::vector<BoundingBox>& candidates,
                                          const std::vector<Annotation>& gt, float positive_iou, int max_samples,
                                          float positive_fraction) {
  std::vector<RoiSample> pos, neg;
  for (const auto& c : candidates) {
    float best = 0.f;
    int best_g = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const float iou = box_iou(c, gt[g].box);
      if (iou > best) best = iou, best_g = static_cast<int>(g);
    }
    if (best_g >= 0 && best >= positive_iou)
      pos.push_back({c, gt[static_cast<std::size_t>(best_g)].label.index, best_g});
    else
      neg.push_back({c, -1, -1});
  }
  const int max_pos = std::max(1, static_cast<int>(std::floor(max_samples * positive_fraction)));
  const int n_pos = std::min(static_cast<int>(pos.size()), max_pos);
  const int n_neg = std::min(static_cast<int>(neg.size()), max_samples - n_pos);
  std::vector<RoiSample> out(pos.begin(), pos.begin() + n_pos);
  out.insert(out.end(), neg.begin(), neg.begin() + n_neg);
  return out;
}

// Score-threshold, decode, clip, per-class NMS, cap. `probs` is
// [proposals][K], `deltas` is [proposals][4].
inline std::vector<Detection> postprocess_detections(const std::vector<BoundingBox>& proposals,
                                                     const std::vector<std::vector<float>>& probs,
                                                     const std::vector<BoxDelta>& deltas, float score_threshold,
                                                     float nms_iou, int max_detections, float image_size) {
  std::vector<Detection> cand;
  for (std::size_t n = 0; n < proposals.size(); ++n) {
    const BoundingBox box = clip_box(decode_box(proposals[n], deltas[n]), image_size, image_size);
    if (!box.valid()) continue;
    for (std::size_t k = 0; k < probs[n].size(); ++k) {
      const float s = probs[n][k];
      if (s < score_threshold) continue;
      cand.push_back({box, ClassLabel{static_cast<int>(k)}, s});
    }
  }
  auto kept = per_class_nms(cand, nms_iou);
  if (max_detections >= 0 && static_cast<int>(kept.size()) > max_detections)
    kept.resize(static_cast<std::size_t>(max_detections));
  return kept;
}

template <typename S>
struct EncoderTrace {
  std::vector<Tensor<S>> acts;  // acts[0] is the network input
  std::vector<Buffer<S>> cols;
  const Tensor<S>& features() const { return acts.back(); }
};

template <typename S>
struct RpnOutput {
  Buffer<S> objectness;  // [A, HW]
  Buffer<S> deltas;      // [4A, HW]
};

template <typename S>
struct RoiOutput {
  std::vector<std::vector<float>> probs;  // [N][K]
  std::vector<BoxDelta> deltas;           // [N]
};

template <typename S>
class Detector {
 public:
  explicit Detector(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int fs = cfg_.feature_size();
    anchors_ = make_anchors(fs, fs, cfg_.stride(), cfg_.anchor_scales);
    build_layout();
  }

  const DetectorConfig& config() const { return cfg_; }
  const std::vector<BoundingBox>& anchors() const { return anchors_; }

  // Parameter layout with every value zero.
  ParamSet<S> zero_params() const { return layout_; }

  ParamSet<S> init_params(std::uint64_t seed) const {
    ParamSet<S> p = layout_;
    Rng rng{seed, 0xde7ec7};
    auto normal_fill = [&](std::size_t idx, double std) {
      for (auto& v : p[idx].values) v = static_cast<S>(std * rng.normal());
    };
    int c_in = 3;
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      normal_fill(conv_w_[i], std::sqrt(2.0 / (9.0 * c_in)));
      c_in = cfg_.channels[i];
    }
    const double prior_bias = -std::log((1.0 - kClassPrior) / kClassPrior);
    normal_fill(rpn_obj_w_, 0.01);
    for (auto& v : p[rpn_obj_b_].values) v = static_cast<S>(prior_bias);
    normal_fill(rpn_reg_w_, 0.001);
    normal_fill(roi_fc_w_, std::sqrt(2.0 / roi_input_size()));
    normal_fill(roi_cls_w_, 0.01);
    for (auto& v : p[roi_cls_b_].values) v = static_cast<S>(prior_bias);
    normal_fill(roi_reg_w_, 0.001);
    return p;
  }

  int roi_input_size() const { return cfg_.feature_channels() * cfg_.roi_pool * cfg_.roi_pool; }

  // Network input: pixels shifted to [-0.5, 0.5].
  Tensor<S> to_input(const Image& img) const {
    if (img.height() != cfg_.image_size || img.width() != cfg_.image_size)
      throw ConfigError("image shape does not match the detector configuration");
    Tensor<S> t(3, img.height(), img.width());
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<S>(img.data()[i]) - S(0.5);
    return t;
  }

  EncoderTrace<S> encode_trace(const ParamSet<S>& p, const Image& img) const {
    EncoderTrace<S> tr;
    tr.acts.reserve(conv_w_.size() + 1);
    tr.acts.push_back(to_input(img));
    tr.cols.resize(conv_w_.size());
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      Tensor<S> out;
      conv3x3_forward(p[conv_w_[i]].data(), p[conv_b_[i]].data(), cfg_.channels[i], tr.acts[i], cfg_.strides[i],
                      true, out, tr.cols[i]);
      tr.acts.push_back(std::move(out));
    }
    return tr;
  }

  Tensor<S> encode(const ParamSet<S>& p, const Image& img) const { return encode_trace(p, img).features(); }

  // Accumulates encoder gradients from dfeat (consumed).
  void encoder_backward(const ParamSet<S>& p, const EncoderTrace<S>& tr, Tensor<S> dfeat, ParamSet<S>& grad) const {
    for (std::size_t ii = conv_w_.size(); ii-- > 0;) {
      const Tensor<S>& in = tr.acts[ii];
      Tensor<S> din;
      if (ii > 0) din = Tensor<S>(in.channels, in.height, in.width);
      conv3x3_backward(p[conv_w_[ii]].data(), tr.acts[ii + 1], true, dfeat, tr.cols[ii], cfg_.strides[ii],
                       grad[conv_w_[ii]].data(), grad[conv_b_[ii]].data(), ii > 0 ? &din : nullptr);
      dfeat = std::move(din);
    }
  }

  RpnOutput<S> rpn_heads(const ParamSet<S>& p, const Tensor<S>& feat) const {
    const int c = feat.channels, hw = static_cast<int>(feat.plane()), a = cfg_.num_anchors_per_cell();
    ConstMatMap<S> f(feat.data.data(), c, hw);
    RpnOutput<S> out;
    out.objectness.resize(static_cast<std::size_t>(a) * hw);
    out.deltas.resize(static_cast<std::size_t>(4 * a) * hw);
    MatMap<S> o(out.objectness.data(), a, hw);
    o.noalias() = ConstMatMap<S>(p[rpn_obj_w_].data(), a, c) * f;
    o.colwise() += ConstVecMap<S>(p[rpn_obj_b_].data(), a);
    MatMap<S> d(out.deltas.data(), 4 * a, hw);
    d.noalias() = ConstMatMap<S>(p[rpn_reg_w_].data(), 4 * a, c) * f;
    d.colwise() += ConstVecMap<S>(p[rpn_reg_b_].data(), 4 * a);
    return out;
  }

  S anchor_logit(const RpnOutput<S>& r, std::size_t anchor) const {
    const std::size_t a = static_cast<std::size_t>(cfg_.num_anchors_per_cell());
    return r.objectness[(anchor % a) * hw() + anchor / a];
  }

  BoxDelta anchor_delta(const RpnOutput<S>& r, std::size_t anchor) const {
    const std::size_t a = static_cast<std::size_t>(cfg_.num_anchors_per_cell());
    const std::size_t cell = anchor / a, s = anchor % a;
    BoxDelta d{};
    for (std::size_t k = 0; k < 4; ++k) d[k] = static_cast<double>(r.deltas[(s * 4 + k) * hw() + cell]);
    return d;
  }

  // Decoded, clipped, NMS-filtered proposals by descending objectness.
  std::vector<Proposal> propose(const RpnOutput<S>& r, int top_n, float nms_iou) const {
    if (top_n <= 0) return {};
    const float size = static_cast<float>(cfg_.image_size);
    std::vector<BoundingBox> boxes;
    std::vector<float> scores;
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
      const BoundingBox b = clip_box(decode_box(anchors_[i], anchor_delta(r, i)), size, size);
      if (b.width() < 1.f || b.height() < 1.f) continue;
      boxes.push_back(b);
      scores.push_back(static_cast<float>(anchor_logit(r, i)));
    }
    std::vector<Proposal> out;
    for (int i : nms(boxes, scores, nms_iou, top_n))
      out.push_back({boxes[static_cast<std::size_t>(i)], scores[static_cast<std::size_t>(i)]});
    return out;
  }

  std::vector<Proposal> rpn_propose(const ParamSet<S>& p, const Tensor<S>& feat, int top_n, float nms_iou) const {
    return propose(rpn_heads(p, feat), top_n, nms_iou);
  }

  RoiOutput<S> roi_head(const ParamSet<S>& p, const Tensor<S>& feat, const std::vector<BoundingBox>& boxes) const {
    RoiOutput<S> out;
    const int n = static_cast<int>(boxes.size());
    if (n == 0) return out;
    RoiForward fw = roi_forward(p, feat, boxes);
    const int k = cfg_.num_classes;
    out.probs.assign(static_cast<std::size_t>(n), std::vector<float>(static_cast<std::size_t>(k)));
    out.deltas.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      for (int c = 0; c < k; ++c)
        out.probs[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] =
            static_cast<float>(sigmoid(fw.cls[static_cast<std::size_t>(c) * n + j]));
      for (int q = 0; q < 4; ++q)
        out.deltas[static_cast<std::size_t>(j)][static_cast<std::size_t>(q)] =
            static_cast<double>(fw.reg[static_cast<std::size_t>(q) * n + j]);
    }
    return out;
  }

  // Pooled ROI features for one box, [C * pool * pool] channel-major.
  Buffer<S> roi_crop(const Tensor<S>& feat, const BoundingBox& box) const {
    const auto taps = bilinear_taps(box.x1, box.y1, box.x2, box.y2, cfg_.stride(), cfg_.roi_pool, feat.height,
                                    feat.width);
    Buffer<S> out(static_cast<std::size_t>(roi_input_size()));
    bilinear_gather(feat, taps, out.data(), 1, 0);
    return out;
  }

  std::vector<Detection> detect_features(const ParamSet<S>& p, const Tensor<S>& feat, float score_threshold,
                                         float nms_iou) const {
    const auto proposals = rpn_propose(p, feat, cfg_.test_proposals, cfg_.rpn_nms_iou);
    std::vector<BoundingBox> boxes;
    for (const auto& pr : proposals) boxes.push_back(pr.box);
    const auto roi = roi_head(p, feat, boxes);
    return postprocess_detections(boxes, roi.probs, roi.deltas, score_threshold, nms_iou, cfg_.max_detections,
                                  static_cast<float>(cfg_.image_size));
  }

  std::vector<Detection> detect(const ParamSet<S>& p, const Image& img, float score_threshold,
                                float nms_iou) const {
    return detect_features(p, encode(p, img), score_threshold, nms_iou);
  }

  // Loss of the RPN and ROI heads for one image on top of precomputed
  // features. Gradients (multiplied by `weight`) are accumulated into
  // `grad` and `dfeat` when those are given. Proposals for the ROI stage
  // come from the current RPN unless `fixed_proposals` is set; ground-truth
  // boxes are always appended.
  DetectionLoss head_loss(const ParamSet<S>& p, const Tensor<S>& feat, const std::vector<Annotation>& gt,
                          HeadTerms terms, S weight, ParamSet<S>* grad, Tensor<S>* dfeat,
                          const std::vector<BoundingBox>* fixed_proposals = nullptr) const {
    DetectionLoss loss;
    const bool with_reg = terms == HeadTerms::kSupervised;
    const int c = feat.channels, hw_i = static_cast<int>(feat.plane()), a = cfg_.num_anchors_per_cell();
    const RpnOutput<S> rpn = rpn_heads(p, feat);

    // RPN classification and regression.
    const auto assign = assign_anchors(anchors_, gt, cfg_.rpn_positive_iou, cfg_.rpn_negative_iou);
    Buffer<S> d_obj(rpn.objectness.size(), S(0)), d_del(rpn.deltas.size(), S(0));
    int n_labeled = 0, n_pos = 0;
    for (int l : assign.label) n_labeled += l >= 0, n_pos += l == 1;
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
      if (assign.label[i] < 0) continue;
      const std::size_t cell = i / static_cast<std::size_t>(a), s = i % static_cast<std::size_t>(a);
      const S z = rpn.objectness[s * hw() + cell];
      const S y = S(assign.label[i]);
      loss.rpn_cls += static_cast<double>(bce_with_logit(z, y)) / n_labeled;
      d_obj[s * hw() + cell] = (sigmoid(z) - y) / S(n_labeled) * weight;
      if (with_reg && assign.label[i] == 1) {
        const auto t = encode_box(anchors_[i], gt[static_cast<std::size_t>(assign.matched[i])].box);
        for (std::size_t k = 0; k < 4; ++k) {
          const std::size_t idx = (s * 4 + k) * hw() + cell;
          const double diff = static_cast<double>(rpn.deltas[idx]) - t[k];
          loss.rpn_reg += std::fabs(diff) / n_pos;
          d_del[idx] = S((diff > 0) - (diff < 0)) / S(n_pos) * weight;
        }
      }
    }

    // ROI stage.
    std::vector<BoundingBox> candidates;
    if (fixed_proposals) {
      candidates = *fixed_proposals;
    } else {
      for (const auto& pr : propose(rpn, cfg_.train_proposals, cfg_.rpn_nms_iou)) candidates.push_back(pr.box);
    }
    for (const auto& g : gt) candidates.push_back(g.box);
    const bool run_roi = !(terms == HeadTerms::kClassificationOnly && gt.empty());
    std::vector<RoiSample> samples;
    if (run_roi)
      samples = sample_rois(candidates, gt, cfg_.roi_positive_iou, cfg_.roi_samples, cfg_.roi_positive_fraction);
    const int n = static_cast<int>(samples.size());

    if (n > 0) {
      std::vector<BoundingBox> boxes;
      for (const auto& s : samples) boxes.push_back(s.box);
      RoiForward fw = roi_forward(p, feat, boxes);
      const int k = cfg_.num_classes, hd = cfg_.roi_hidden;
      Buffer<S> d_cls(fw.cls.size(), S(0)), d_reg(fw.reg.size(), S(0));
      int n_roi_pos = 0;
      for (const auto& s : samples) n_roi_pos += s.label >= 0;
      for (int j = 0; j < n; ++j) {
        const auto& s = samples[static_cast<std::size_t>(j)];
        for (int q = 0; q < k; ++q) {
          const std::size_t idx = static_cast<std::size_t>(q) * n + j;
          const S y = S(s.label == q ? 1 : 0);
          loss.roi_cls += static_cast<double>(bce_with_logit(fw.cls[idx], y)) / n;
          d_cls[idx] = (sigmoid(fw.cls[idx]) - y) / S(n) * weight;
        }
        if (with_reg && s.label >= 0) {
          const auto t = encode_box(s.box, gt[static_cast<std::size_t>(s.matched)].box);
          for (int q = 0; q < 4; ++q) {
            const std::size_t idx = static_cast<std::size_t>(q) * n + j;
            const double diff = static_cast<double>(fw.reg[idx]) - t[static_cast<std::size_t>(q)];
            loss.roi_reg += std::fabs(diff) / n_roi_pos;
            d_reg[idx] = S((diff > 0) - (diff < 0)) / S(n_roi_pos) * weight;
          }
        }
      }
      if (grad) {
        ConstMatMap<S> dcls(d_cls.data(), k, n), dreg(d_reg.data(), 4, n);
        ConstMatMap<S> hidden(fw.hidden.data(), hd, n);
        MatMap<S>((*grad)[roi_cls_w_].data(), k, hd).noalias() += dcls * hidden.transpose();
        VecMap<S>((*grad)[roi_cls_b_].data(), k) += dcls.rowwise().sum();
        RowMat<S> dh = ConstMatMap<S>(p[roi_cls_w_].data(), k, hd).transpose() * dcls;
        if (with_reg) {
          MatMap<S>((*grad)[roi_reg_w_].data(), 4, hd).noalias() += dreg * hidden.transpose();
          VecMap<S>((*grad)[roi_reg_b_].data(), 4) += dreg.rowwise().sum();
          dh.noalias() += ConstMatMap<S>(p[roi_reg_w_].data(), 4, hd).transpose() * dreg;
        }
        for (int r = 0; r < hd; ++r)
          for (int j = 0; j < n; ++j)
            if (fw.hidden[static_cast<std::size_t>(r) * n + j] <= S(0)) dh(r, j) = S(0);
        const int in = roi_input_size();
        ConstMatMap<S> x(fw.pooled.data(), in, n);
        MatMap<S>((*grad)[roi_fc_w_].data(), hd, in).noalias() += dh * x.transpose();
        VecMap<S>((*grad)[roi_fc_b_].data(), hd) += dh.rowwise().sum();
        if (dfeat) {
          RowMat<S> dx = ConstMatMap<S>(p[roi_fc_w_].data(), hd, in).transpose() * dh;
          for (int j = 0; j < n; ++j) bilinear_scatter(fw.taps[static_cast<std::size_t>(j)], dx.data(), n, j, *dfeat);
        }
      }
    }

    if (grad) {
      ConstMatMap<S> f(feat.data.data(), c, hw_i);
      ConstMatMap<S> dobj(d_obj.data(), a, hw_i), ddel(d_del.data(), 4 * a, hw_i);
      MatMap<S>((*grad)[rpn_obj_w_].data(), a, c).noalias() += dobj * f.transpose();
      VecMap<S>((*grad)[rpn_obj_b_].data(), a) += dobj.rowwise().sum();
      if (with_reg) {
        MatMap<S>((*grad)[rpn_reg_w_].data(), 4 * a, c).noalias() += ddel * f.transpose();
        VecMap<S>((*grad)[rpn_reg_b_].data(), 4 * a) += ddel.rowwise().sum();
      }
      if (dfeat) {
        MatMap<S> df(dfeat->data.data(), c, hw_i);
        df.noalias() += ConstMatMap<S>(p[rpn_obj_w_].data(), a, c).transpose() * dobj;
        if (with_reg) df.noalias() += ConstMatMap<S>(p[rpn_reg_w_].data(), 4 * a, c).transpose() * ddel;
      }
    }
    return loss;
  }

  // Full per-image loss including the encoder backward pass.
  DetectionLoss image_loss(const ParamSet<S>& p, const Image& img, const std::vector<Annotation>& gt, HeadTerms terms,
                           S weight, ParamSet<S>* grad, const std::vector<BoundingBox>* fixed_proposals = nullptr) const {
    const auto tr = encode_trace(p, img);
    const auto& feat = tr.features();
    Tensor<S> dfeat(feat.channels, feat.height, feat.width);
    const auto loss = head_loss(p, feat, gt, terms, weight, grad, grad ? &dfeat : nullptr, fixed_proposals);
    if (grad) encoder_backward(p, tr, std::move(dfeat), *grad);
    return loss;
  }

  // Mean supervised loss over a labeled batch; gradient of that mean is
  // accumulated into `grad` when given.
  DetectionLoss supervised_loss(const ParamSet<S>& p, const std::vector<const AnnotatedImage*>& batch,
                                ParamSet<S>* grad) const {
    DetectionLoss total;
    if (batch.empty()) return total;
    const S w = S(1) / S(batch.size());
    for (const auto* item : batch) total += image_loss(p, item->pixels, item->annotations, HeadTerms::kSupervised, w, grad);
    return total.scaled(1.0 / batch.size());
  }

  // Parameter groups by head, used for reporting and gradient checks.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_groups() const {
    return {{"encoder", concat(conv_w_, conv_b_)},
            {"rpn_cls", {rpn_obj_w_, rpn_obj_b_}},
            {"rpn_reg", {rpn_reg_w_, rpn_reg_b_}},
            {"roi_fc", {roi_fc_w_, roi_fc_b_}},
            {"roi_cls", {roi_cls_w_, roi_cls_b_}},
            {"roi_reg", {roi_reg_w_, roi_reg_b_}}};
  }

  std::vector<std::size_t> regression_parameters() const {
    return {rpn_reg_w_, rpn_reg_b_, roi_reg_w_, roi_reg_b_};
  }
  std::vector<std::size_t> encoder_parameters() const { return concat(conv_w_, conv_b_); }

 private:
  static constexpr double kClassPrior = 0.1;

  struct RoiForward {
    std::vector<std::vector<BilinearTap>> taps;
    Buffer<S> pooled;  // [in, N]
    Buffer<S> hidden;  // [H, N], post-ReLU
    Buffer<S> cls;     // [K, N]
    Buffer<S> reg;     // [4, N]
  };

  std::size_t hw() const {
    const auto fs = static_cast<std::size_t>(cfg_.feature_size());
    return fs * fs;
  }

  RoiForward roi_forward(const ParamSet<S>& p, const Tensor<S>& feat, const std::vector<BoundingBox>& boxes) const {
    RoiForward fw;
    const int n = static_cast<int>(boxes.size()), in = roi_input_size(), hd = cfg_.roi_hidden, k = cfg_.num_classes;
    fw.pooled.resize(static_cast<std::size_t>(in) * n);
    fw.taps.reserve(boxes.size());
    for (int j = 0; j < n; ++j) {
      const auto& b = boxes[static_cast<std::size_t>(j)];
      fw.taps.push_back(bilinear_taps(b.x1, b.y1, b.x2, b.y2, cfg_.stride(), cfg_.roi_pool, feat.height, feat.width));
      bilinear_gather(feat, fw.taps.back(), fw.pooled.data(), n, j);
    }
    fw.hidden.resize(static_cast<std::size_t>(hd) * n);
    MatMap<S> h(fw.hidden.data(), hd, n);
    h.noalias() = ConstMatMap<S>(p[roi_fc_w_].data(), hd, in) * ConstMatMap<S>(fw.pooled.data(), in, n);
    h.colwise() += ConstVecMap<S>(p[roi_fc_b_].data(), hd);
    h = h.cwiseMax(S(0));
    fw.cls.resize(static_cast<std::size_t>(k) * n);
    MatMap<S> cl(fw.cls.data(), k, n);
    cl.noalias() = ConstMatMap<S>(p[roi_cls_w_].data(), k, hd) * h;
    cl.colwise() += ConstVecMap<S>(p[roi_cls_b_].data(), k);
    fw.reg.resize(static_cast<std::size_t>(4) * n);
    MatMap<S> rg(fw.reg.data(), 4, n);
    rg.noalias() = ConstMatMap<S>(p[roi_reg_w_].data(), 4, hd) * h;
    rg.colwise() += ConstVecMap<S>(p[roi_reg_b_].data(), 4);
    return fw;
  }

  static std::vector<std::size_t> concat(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  void build_layout() {
    int c_in = 3;
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
      const std::string base = "encoder/conv" + std::to_string(i);
      conv_w_.push_back(layout_.add(base + "/weight", {cfg_.channels[i], c_in * 9}));
      conv_b_.push_back(layout_.add(base + "/bias", {cfg_.channels[i]}));
      c_in = cfg_.channels[i];
    }
    const int a = cfg_.num_anchors_per_cell(), c = cfg_.feature_channels();
    rpn_obj_w_ = layout_.add("rpn/objectness/weight", {a, c});
    rpn_obj_b_ = layout_.add("rpn/objectness/bias", {a});
    rpn_reg_w_ = layout_.add("rpn/deltas/weight", {4 * a, c});
    rpn_reg_b_ = layout_.add("rpn/deltas/bias", {4 * a});
    roi_fc_w_ = layout_.add("roi/fc/weight", {cfg_.roi_hidden, roi_input_size()});
    roi_fc_b_ = layout_.add("roi/fc/bias", {cfg_.roi_hidden});
    roi_cls_w_ = layout_.add("roi/cls/weight", {cfg_.num_classes, cfg_.roi_hidden});
    roi_cls_b_ = layout_.add("roi/cls/bias", {cfg_.num_classes});
    roi_reg_w_ = layout_.add("roi/deltas/weight", {4, cfg_.roi_hidden});
    roi_reg_b_ = layout_.add("roi/deltas/bias", {4});
  }

  DetectorConfig cfg_;
  std::vector<BoundingBox> anchors_;
  ParamSet<S> layout_;
  std::vector<std::size_t> conv_w_, conv_b_;
  std::size_t rpn_obj_w_ = 0, rpn_obj_b_ = 0, rpn_reg_w_ = 0, rpn_reg_b_ = 0;
  std::size_t roi_fc_w_ = 0, roi_fc_b_ = 0, roi_cls_w_ = 0, roi_cls_b_ = 0, roi_reg_w_ = 0, roi_reg_b_ = 0;
};

}  // namespace shiftdet
