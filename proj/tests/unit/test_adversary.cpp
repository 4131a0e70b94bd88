// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "shiftdet/adversary/discriminator.hpp"
#include "shiftdet/detector/sgd.hpp"
#include "support/micro.hpp"

namespace shiftdet {
namespace {

Tensor<double> random_features(Rng& rng, int c, double offset, double spread = 0.3) {
  Tensor<double> t(c, 8, 8);
  for (auto& v : t.data) v = offset + spread * rng.normal();
  return t;
}

TEST(Discriminator, ZeroWeightsGiveOneHalf) {
  const Discriminator<double> disc(DiscriminatorConfig{4, 6});
  Rng rng{3};
  const auto f = random_features(rng, 4, 0.0, 1.0);
  const auto p = disc.zero_params();
  EXPECT_EQ(disc.logit(p, f), 0.0);
  EXPECT_EQ(disc.discriminate(p, f), 0.5);
}

TEST(Discriminator, DeterministicOnIdenticalInputs) {
  const Discriminator<double> disc(DiscriminatorConfig{4, 6});
  const auto p = disc.init_params(5);
  Rng rng{4};
  const auto f = random_features(rng, 4, 0.2, 1.0);
  const auto copy = f;
  EXPECT_EQ(disc.discriminate(p, f), disc.discriminate(p, copy));
}

TEST(Discriminator, RaisingFinalBiasRaisesProbability) {
  const Discriminator<double> disc(DiscriminatorConfig{4, 6});
  Rng rng{8};
  for (int trial = 0; trial < 20; ++trial) {
    auto p = disc.init_params(static_cast<std::uint64_t>(trial));
    const auto f = random_features(rng, 4, 0.0, 1.0);
    const double before = disc.discriminate(p, f);
    p.at("fc/bias").values[0] += 1.0;
    EXPECT_GT(disc.discriminate(p, f), before);
  }
}

TEST(Discriminator, RejectsWrongChannelCount) {
  const Discriminator<double> disc(DiscriminatorConfig{4, 6});
  EXPECT_THROW(disc.discriminate(disc.init_params(1), Tensor<double>(3, 8, 8)), ConfigError);
}

TEST(DiscriminatorLoss, Examples) {
  EXPECT_NEAR(discriminator_loss(0.5, DomainTag::kTarget), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(discriminator_loss(0.5, DomainTag::kSource), std::numbers::ln2, 1e-15);
  EXPECT_LT(discriminator_loss(1.0 - kProbabilityClamp, DomainTag::kTarget), 1e-6);
  EXPECT_LT(discriminator_loss(0.0, DomainTag::kSource), 1e-6);
}

TEST(DiscriminatorLoss, NonNegativeAndFiniteEverywhere) {
  Rng rng{11};
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform();
    for (auto d : {DomainTag::kSource, DomainTag::kTarget}) {
      const double l = discriminator_loss(p, d);
      EXPECT_TRUE(std::isfinite(l));
      EXPECT_GE(l, 0.0);
    }
  }
  EXPECT_TRUE(std::isfinite(discriminator_loss(0.0, DomainTag::kTarget)));
  EXPECT_TRUE(std::isfinite(discriminator_loss(1.0, DomainTag::kSource)));
}

TEST(Grl, ForwardIsTheSameArray) {
  Rng rng{2};
  const auto f = random_features(rng, 5, 0.0, 3.0);
  const auto& out = grl_forward(f);
  EXPECT_EQ(&out, &f);
  EXPECT_EQ(out, f);
}

TEST(Grl, BackwardScalesByMinusCoefficient) {
  Rng rng{6};
  const auto g = random_features(rng, 3, 0.0, 1.0);
  for (double c : {1.0, 0.5, 0.0}) {
    auto r = g;
    grl_backward(r, GrlSpec{c});
    for (std::size_t i = 0; i < g.data.size(); ++i) EXPECT_EQ(r.data[i], -c * g.data[i]);
  }
}

TEST(Grl, EncoderGradientIsExactNegationOfUnreversed) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const testing::AdversarialMicro m(seed);
    const auto reversed = m.gradients(GrlSpec{1.0}).first;
    const auto plain = m.unreversed_encoder_gradient();
    double norm = 0.0;
    for (std::size_t a : m.det.encoder_parameters()) {
      for (std::size_t k = 0; k < plain[a].size(); ++k) {
        ASSERT_EQ(reversed[a].values[k], -plain[a].values[k]) << plain[a].name << " seed " << seed;
        norm += plain[a].values[k] * plain[a].values[k];
      }
    }
    EXPECT_GT(norm, 0.0);
    // Head parameters are untouched by the adversarial path.
    for (std::size_t a : m.det.regression_parameters())
      for (double v : reversed[a].values) EXPECT_EQ(v, 0.0);
  }
}

TEST(Grl, CoefficientScalesEncoderGradient) {
  const testing::AdversarialMicro m(4);
  const auto full = m.gradients(GrlSpec{1.0});
  const auto half = m.gradients(GrlSpec{0.5});
  for (std::size_t a : m.det.encoder_parameters())
    for (std::size_t k = 0; k < full.first[a].size(); ++k)
      EXPECT_EQ(half.first[a].values[k], 0.5 * full.first[a].values[k]);
  // The discriminator side is not reversed.
  for (std::size_t a = 0; a < full.second.count(); ++a) EXPECT_EQ(full.second[a].values, half.second[a].values);
}

TEST(AdversarialLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {1, 2}) {
    for (const auto& c : testing::check_adversarial_gradient(seed)) {
      EXPECT_LT(c.rel_error, 1e-3) << c.group << " seed " << seed;
      EXPECT_GT(c.analytic_norm, 0.0) << c.group;
      EXPECT_TRUE(testing::kink_share_ok(c)) << c.excluded << " of " << c.checked + c.excluded << c.group;
    }
  }
}

TEST(AdversarialLoss, NeedsBothDomains) {
  const testing::AdversarialMicro m(1);
  const auto tr = m.det.encode_trace(m.theta, m.source[0].pixels);
  auto g = m.phi.zeros_like();
  EXPECT_THROW(adversarial_contribution<double>(m.disc, m.phi, {&tr}, {}, 1.0, GrlSpec{}, g), ConfigError);
  EXPECT_THROW(adversarial_contribution<double>(m.disc, m.phi, {}, {&tr}, 1.0, GrlSpec{}, g), ConfigError);
}

// Discriminator-only training on fixed features; returns the mean loss.
double train_discriminator(const std::vector<Tensor<double>>& source, const std::vector<Tensor<double>>& target,
                           int steps) {
  const Discriminator<double> disc(DiscriminatorConfig{4, 8});
  auto phi = disc.init_params(21);
  auto vel = phi.zeros_like();
  const SgdConfig sgd{0.1, 0.9, 0.0};
  const double per = 1.0 / static_cast<double>(source.size() + target.size());
  auto mean_loss = [&](ParamSet<double>* grad) {
    double sum = 0.0;
    for (const auto& f : source) sum += disc.loss_and_grad(phi, f, DomainTag::kSource, per, grad, nullptr).loss;
    for (const auto& f : target) sum += disc.loss_and_grad(phi, f, DomainTag::kTarget, per, grad, nullptr).loss;
    return sum * per;
  };
  for (int s = 0; s < steps; ++s) {
    auto g = phi.zeros_like();
    mean_loss(&g);
    sgd_step(phi, g, vel, sgd);
  }
  return mean_loss(nullptr);
}

TEST(AdversarialLoss, SeparableFeaturesAreLearnedIn200Steps) {
  Rng rng{31};
  std::vector<Tensor<double>> source, target;
  for (int i = 0; i < 8; ++i) source.push_back(random_features(rng, 4, 0.0));
  for (int i = 0; i < 8; ++i) target.push_back(random_features(rng, 4, 1.0));
  EXPECT_LT(train_discriminator(source, target, 200), 0.1);
}

TEST(AdversarialLoss, IndistinguishableDomainsSettleAtLn2) {
  Rng rng{32};
  std::vector<Tensor<double>> feats;
  for (int i = 0; i < 8; ++i) feats.push_back(random_features(rng, 4, 0.5));
  // Same features on both sides: no discriminator can beat ln 2.
  const Discriminator<double> disc(DiscriminatorConfig{4, 8});
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto phi = disc.init_params(s);
    double sum = 0.0;
    for (const auto& f : feats)
      sum += disc.loss_and_grad(phi, f, DomainTag::kSource, 1.0, nullptr, nullptr).loss +
             disc.loss_and_grad(phi, f, DomainTag::kTarget, 1.0, nullptr, nullptr).loss;
    EXPECT_GE(sum / 16.0, std::numbers::ln2 - 1e-12);
  }
  EXPECT_NEAR(train_discriminator(feats, feats, 200), std::numbers::ln2, 1e-3);
}

}  // namespace
}  // namespace shiftdet
