// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Image-level domain discriminator on encoder features, its binary
// cross-entropy loss, and the gradient reversal that turns the
// discriminator's minimization into encoder maximization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/core/rng.hpp"
#include "shiftdet/detector/detector.hpp"
#include "shiftdet/domain/box.hpp"
#include "shiftdet/nn/layers.hpp"
#include "shiftdet/nn/params.hpp"

namespace shiftdet {

inline constexpr double kProbabilityClamp = 1e-7;

struct DiscriminatorConfig {
  int in_channels = 64;
  int hidden = 16;
};

struct GrlSpec {
  double coefficient = 1.0;
};

// -d log p - (1 - d) log(1 - p), p clamped to [eps, 1 - eps].
template <typename S>
S discriminator_loss(S p, DomainTag d) {
  const S eps = S(kProbabilityClamp);
  const S q = std::clamp(p, eps, S(1) - eps);
  return d == DomainTag::kTarget ? -std::log(q) : -std::log(S(1) - q);
}

// Identity forward.
template <typename S>
const Tensor<S>& grl_forward(const Tensor<S>& x) {
  return x;
}

// Backward: upstream gradient times -coefficient.
template <typename S>
void grl_backward(Tensor<S>& grad, const GrlSpec& spec) {
  const S k = static_cast<S>(-spec.coefficient);
  for (auto& g : grad.data) g *= k;
}

template <typename S>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
    if (cfg_.in_channels < 1 || cfg_.hidden < 1) throw ConfigError("bad discriminator size");
    w0_ = layout_.add("conv0/weight", {cfg_.hidden, cfg_.in_channels * 9});
    b0_ = layout_.add("conv0/bias", {cfg_.hidden});
    w1_ = layout_.add("conv1/weight", {cfg_.hidden, cfg_.hidden * 9});
    b1_ = layout_.add("conv1/bias", {cfg_.hidden});
    fw_ = layout_.add("fc/weight", {1, cfg_.hidden});
    fb_ = layout_.add("fc/bias", {1});
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamSet<S> zero_params() const { return layout_; }

  ParamSet<S> init_params(std::uint64_t seed) const {
    ParamSet<S> p = layout_;
    Rng rng{seed, 0xd15c};
    auto fill = [&](std::size_t idx, double std) {
      for (auto& v : p[idx].values) v = static_cast<S>(std * rng.normal());
    };
    fill(w0_, std::sqrt(2.0 / (9.0 * cfg_.in_channels)));
    fill(w1_, std::sqrt(2.0 / (9.0 * cfg_.hidden)));
    fill(fw_, 0.01);
    return p;
  }

  S logit(const ParamSet<S>& p, const Tensor<S>& feat) const { return forward(p, feat).logit; }

  // Probability that the features come from the target domain.
  S discriminate(const ParamSet<S>& p, const Tensor<S>& feat) const { return sigmoid(logit(p, feat)); }

  struct Result {
    S probability;
    S loss;
  };

  // Loss for one image with domain label d. Accumulates weight * dL/dphi
  // into grad and weight * dL/dfeat (not reversed) into dfeat.
  Result loss_and_grad(const ParamSet<S>& p, const Tensor<S>& feat, DomainTag d, S weight, ParamSet<S>* grad,
                       Tensor<S>* dfeat) const {
    Trace tr = forward(p, feat);
    const S prob = sigmoid(tr.logit);
    const S loss = discriminator_loss(prob, d);
    if (!grad && !dfeat) return {prob, loss};
    const S eps = S(kProbabilityClamp);
    const S target = S(domain_value(d));
    // Inside the clamp region the loss is flat in the logit.
    const S dz = (prob < eps || prob > S(1) - eps) ? S(0) : (prob - target) * weight;
    const int h = cfg_.hidden, hw = static_cast<int>(tr.a1.plane());
    Tensor<S> da1(h, tr.a1.height, tr.a1.width);
    for (int c = 0; c < h; ++c) {
      const S g = dz * p[fw_].values[static_cast<std::size_t>(c)] / S(hw);
      std::fill(da1.data.begin() + c * hw, da1.data.begin() + (c + 1) * hw, g);
    }
    ParamSet<S> scratch;
    if (!grad) {
      scratch = layout_.zeros_like();
      grad = &scratch;
    }
    ParamSet<S>& g = *grad;
    for (int c = 0; c < h; ++c) g[fw_].values[static_cast<std::size_t>(c)] += dz * tr.pooled[static_cast<std::size_t>(c)];
    g[fb_].values[0] += dz;
    Tensor<S> da0(h, tr.a0.height, tr.a0.width);
    conv3x3_backward(p[w1_].data(), tr.a1, true, da1, tr.cols1, 1, g[w1_].data(), g[b1_].data(), &da0);
    Tensor<S> local;
    Tensor<S>* df = dfeat;
    if (!df) {
      local = Tensor<S>(feat.channels, feat.height, feat.width);
      df = &local;
    }
    conv3x3_backward(p[w0_].data(), tr.a0, true, da0, tr.cols0, 1, g[w0_].data(), g[b0_].data(), df);
    return {prob, loss};
  }

 private:
  struct Trace {
    Tensor<S> a0, a1;
    Buffer<S> cols0, cols1;
    Buffer<S> pooled;
    S logit;
  };

  Trace forward(const ParamSet<S>& p, const Tensor<S>& feat) const {
    if (feat.channels != cfg_.in_channels) throw ConfigError("feature channels do not match the discriminator");
    Trace tr;
    conv3x3_forward(p[w0_].data(), p[b0_].data(), cfg_.hidden, feat, 1, true, tr.a0, tr.cols0);
    conv3x3_forward(p[w1_].data(), p[b1_].data(), cfg_.hidden, tr.a0, 1, true, tr.a1, tr.cols1);
    const int hw = static_cast<int>(tr.a1.plane());
    tr.pooled.assign(static_cast<std::size_t>(cfg_.hidden), S(0));
    S z = p[fb_].values[0];
    for (int c = 0; c < cfg_.hidden; ++c) {
      S acc = S(0);
      for (int i = 0; i < hw; ++i) acc += tr.a1.data[static_cast<std::size_t>(c) * hw + i];
      tr.pooled[static_cast<std::size_t>(c)] = acc / S(hw);
      z += p[fw_].values[static_cast<std::size_t>(c)] * tr.pooled[static_cast<std::size_t>(c)];
    }
    tr.logit = z;
    return tr;
  }

  DiscriminatorConfig cfg_;
  ParamSet<S> layout_;
  std::size_t w0_ = 0, b0_ = 0, w1_ = 0, b1_ = 0, fw_ = 0, fb_ = 0;
};

template <typename S>
struct AdversarialResult {
  double loss = 0.0;                   // mean over the joint batch
  std::vector<Tensor<S>> source_grad;  // encoder-side gradients, already reversed
  std::vector<Tensor<S>> target_grad;
};

// One pass of the min-max objective over a joint batch of student encoder
// traces (source d = 0, target d = 1). The discriminator gradient of
// weight * mean L_dis is accumulated into grad_disc; the feature gradients
// come back through the reversal layer, ready for the encoder backward.
// Only student traces are accepted: the teacher never builds one.
template <typename S>
AdversarialResult<S> adversarial_contribution(const Discriminator<S>& disc, const ParamSet<S>& phi,
                                              const std::vector<const EncoderTrace<S>*>& source,
                                              const std::vector<const EncoderTrace<S>*>& target, S weight,
                                              const GrlSpec& grl, ParamSet<S>& grad_disc) {
  if (source.empty() || target.empty())
    throw ConfigError("adversarial loss needs images from both domains");
  AdversarialResult<S> out;
  const S per_image = weight / S(source.size() + target.size());
  auto run = [&](const std::vector<const EncoderTrace<S>*>& batch, DomainTag d, std::vector<Tensor<S>>& grads) {
    for (const auto* tr : batch) {
      const Tensor<S>& f = grl_forward(tr->features());
      Tensor<S> df(f.channels, f.height, f.width);
      out.loss += static_cast<double>(disc.loss_and_grad(phi, f, d, per_image, &grad_disc, &df).loss);
      grl_backward(df, grl);
      grads.push_back(std::move(df));
    }
  };
  run(source, DomainTag::kSource, out.source_grad);
  run(target, DomainTag::kTarget, out.target_grad);
  out.loss /= static_cast<double>(source.size() + target.size());
  return out;
}

}  // namespace shiftdet
