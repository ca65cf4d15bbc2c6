// Copyright 2026 The FedPass Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedpass/passport.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedpass/network.h"
#include "test_util.h"

namespace fedpass {
namespace {

using ::fedpass::testing::CheckGradient;
using ::fedpass::testing::NetworkGradientError;

constexpr int kInstances = 20;

PassportLayer ScalarLayer(double w) {
  Linear base{1, 1, Tensor({1, 1}, {w}), Tensor()};
  PassportConfig cfg;
  cfg.shape = {1, 1};
  return {base, Autoencoder::Identity(1), cfg};
}

PassportKey ScalarKey(double g, double b) {
  return {Tensor({1, 1}, {g}), Tensor({1, 1}, {b}), {-1.0}};
}

PassportLayer RandomLinearLayer(Rng& rng, Index in, Index out, Index cols) {
  PassportConfig cfg;
  cfg.range = 2.0;
  cfg.shape = {in, cols};
  return PassportLayer::Create(Linear::Create(in, out, rng, false), cfg, rng);
}

PassportLayer RandomConvLayer(Rng& rng, Index in, Index out, Index k, Index side) {
  PassportConfig cfg;
  cfg.range = 2.0;
  cfg.shape = {in, side, side};
  return PassportLayer::Create(Conv2d::Create(in, out, k, rng, false), cfg, rng);
}

void RandomizeAutoencoderBiases(PassportLayer& layer, Rng& rng) {
  layer.autoencoder.encoder.bias = rng.NormalTensor(layer.autoencoder.encoder.bias.shape(), 0, 0.3);
  layer.autoencoder.decoder.bias = rng.NormalTensor(layer.autoencoder.decoder.bias.shape(), 0, 0.3);
}

// Independent scalar-loop evaluation of Avg(D(E(W s))).
std::vector<double> LoopDerive(const PassportLayer& layer, const Tensor& s) {
  const Autoencoder& ae = layer.autoencoder;
  const Index out = layer.out_channels(), hid = ae.hidden();
  const Tensor& w = layer.weight();
  std::vector<std::vector<double>> projected;  // [position][channel]
  if (!layer.is_conv()) {
    const Index in = s.dim(0), cols = s.dim(1);
    for (Index p = 0; p < cols; ++p) {
      std::vector<double> row(static_cast<std::size_t>(out), 0.0);
      for (Index o = 0; o < out; ++o) {
        for (Index i = 0; i < in; ++i) row[o] += w[o * in + i] * s[i * cols + p];
      }
      projected.push_back(row);
    }
  } else {
    const Conv2d& c = std::get<Conv2d>(layer.base);
    const Index cin = c.in_channels, k = c.kernel, h = s.dim(1), wd = s.dim(2);
    for (Index r = 0; r + k <= h; ++r) {
      for (Index q = 0; q + k <= wd; ++q) {
        std::vector<double> row(static_cast<std::size_t>(out), 0.0);
        for (Index o = 0; o < out; ++o) {
          for (Index ci = 0; ci < cin; ++ci) {
            for (Index u = 0; u < k; ++u) {
              for (Index v = 0; v < k; ++v) {
                row[o] += w[((o * cin + ci) * k + u) * k + v] *
                          s[(ci * h + r + u) * wd + q + v];
              }
            }
          }
        }
        projected.push_back(row);
      }
    }
  }
  std::vector<double> value(static_cast<std::size_t>(out), 0.0);
  for (const auto& row : projected) {
    std::vector<double> hidden(static_cast<std::size_t>(hid));
    for (Index j = 0; j < hid; ++j) {
      hidden[j] = ae.encoder.bias[j];
      for (Index o = 0; o < out; ++o) hidden[j] += ae.encoder.weight[j * out + o] * row[o];
    }
    for (Index o = 0; o < out; ++o) {
      double dec = ae.decoder.bias[o];
      for (Index j = 0; j < hid; ++j) dec += ae.decoder.weight[o * hid + j] * hidden[j];
      value[o] += dec / static_cast<double>(projected.size());
    }
  }
  return value;
}

TEST(SamplePassportTest, ZeroVarianceCollapsesToChannelMeans) {
  PassportConfig cfg;
  cfg.range = 50;
  cfg.sigma2 = 0;
  cfg.shape = {4, 3};
  Rng rng(1);
  const PassportKey key = SamplePassport(cfg, rng);
  ASSERT_EQ(key.channel_means.size(), 4u);
  for (Index j = 0; j < 4; ++j) {
    const double mu = key.channel_means[j];
    EXPECT_GT(mu, -50.0);
    EXPECT_LT(mu, 0.0);
    for (Index e = 0; e < 3; ++e) {
      EXPECT_EQ(key.s_gamma[j * 3 + e], mu);
      EXPECT_EQ(key.s_beta[j * 3 + e], mu);
    }
  }
}

// The sample mean of 1e4 unit-variance draws has standard error 0.01.
TEST(SamplePassportTest, GaussianMoments) {
  PassportConfig cfg;
  cfg.range = 50;
  cfg.sigma2 = 1;
  cfg.shape = {1, 10000};
  Rng rng(2);
  const PassportKey key = SamplePassport(cfg, rng);
  const double mu = key.channel_means[0];
  for (const Tensor* s : {&key.s_gamma, &key.s_beta}) {
    const double mean = s->vec().mean();
    const double var = (s->vec().array() - mean).square().sum() / (s->size() - 1);
    EXPECT_LT(std::abs(mean - mu), 3.0 / std::sqrt(10000.0));
    EXPECT_LT(std::abs(var - 1.0), 0.1);
  }
}

TEST(SamplePassportTest, SeedDeterminism) {
  PassportConfig cfg;
  cfg.shape = {5, 2};
  Rng a(42), b(42), c(43);
  const PassportKey ka = SamplePassport(cfg, a), kb = SamplePassport(cfg, b),
                    kc = SamplePassport(cfg, c);
  EXPECT_EQ(ka.s_gamma, kb.s_gamma);
  EXPECT_EQ(ka.s_beta, kb.s_beta);
  EXPECT_EQ(ka.channel_means, kb.channel_means);
  EXPECT_NE(ka.channel_means, kc.channel_means);
}

TEST(SamplePassportTest, ZeroVarianceIsIdempotentForFixedSeed) {
  PassportConfig cfg;
  cfg.sigma2 = 0;
  cfg.shape = {3, 2};
  Rng a(5), b(5);
  EXPECT_EQ(SamplePassport(cfg, a).s_gamma, SamplePassport(cfg, b).s_gamma);
}

TEST(SamplePassportTest, ChannelMeansDistinctOverManyTrials) {
  PassportConfig cfg;
  cfg.range = 50;
  cfg.shape = {8, 1};
  Rng rng(6);
  for (int t = 0; t < 100000; ++t) {
    std::vector<double> mu = SampleChannelMeans(cfg, rng);
    for (double m : mu) {
      ASSERT_GT(m, -50.0);
      ASSERT_LT(m, 0.0);
    }
    std::sort(mu.begin(), mu.end());
    for (std::size_t i = 1; i < mu.size(); ++i) ASSERT_GT(mu[i] - mu[i - 1], kMeanSeparation);
  }
}

TEST(SamplePassportTest, GivenMeansAreKept) {
  PassportConfig cfg;
  cfg.sigma2 = 0;
  cfg.shape = {2, 2};
  Rng rng(7);
  const std::vector<double> mu{-3.0, -7.5};
  const PassportKey key = SamplePassport(cfg, mu, rng);
  EXPECT_EQ(key.s_gamma, Tensor({2, 2}, {-3, -3, -7.5, -7.5}));
  EXPECT_EQ(key.channel_means, mu);
}

TEST(PassportConfigTest, RejectsInvalid) {
  PassportConfig cfg;
  cfg.shape = {2, 1};
  cfg.range = 0;
  EXPECT_THROW(cfg.Validate(), InvalidArgument);
  cfg.range = 1;
  cfg.sigma2 = -1;
  EXPECT_THROW(cfg.Validate(), InvalidArgument);
}

TEST(DeriveScaleBiasTest, IdentityPipelineKeepsOnes) {
  PassportConfig cfg;
  cfg.shape = {3, 1};
  Linear base{3, 3, Tensor({3, 3}), Tensor()};
  base.weight.matrix().setIdentity();
  PassportLayer layer{base, Autoencoder::Identity(3), cfg};
  const Tensor ones = Tensor::Constant({3, 1}, 1.0);
  const ScaleBias sb = DeriveScaleBias(layer, {ones, ones, {}});
  EXPECT_EQ(sb.gamma, Vector::Ones(3));
}

TEST(DeriveScaleBiasTest, ScalarArithmetic) {
  const ScaleBias sb = DeriveScaleBias(ScalarLayer(2.0), ScalarKey(0.5, 1.0));
  EXPECT_DOUBLE_EQ(sb.gamma[0], 1.0);
  EXPECT_DOUBLE_EQ(sb.beta[0], 2.0);
}

TEST(DeriveScaleBiasTest, ConvSpatialMeanMatchesHandConvolution) {
  Conv2d base{1, 1, 1, Tensor({1, 1, 1, 1}, {3.0}), Tensor()};
  PassportConfig cfg;
  cfg.shape = {1, 2, 2};
  PassportLayer layer{base, Autoencoder::Identity(1), cfg};
  const Tensor s({1, 2, 2}, {1, 2, 3, 6});
  const ScaleBias sb = DeriveScaleBias(layer, {s, s, {}});
  EXPECT_DOUBLE_EQ(sb.beta[0], 3.0 * (1 + 2 + 3 + 6) / 4.0);
}

TEST(DeriveScaleBiasTest, ConvMatchesBruteForceOracle) {
  Rng rng(8);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomConvLayer(rng, 2, 3, 2, 4);
    RandomizeAutoencoderBiases(layer, rng);
    const PassportKey key = SamplePassport(layer.config, rng);
    const ScaleBias sb = DeriveScaleBias(layer, key);
    const auto gamma = LoopDerive(layer, key.s_gamma), beta = LoopDerive(layer, key.s_beta);
    for (Index c = 0; c < 3; ++c) {
      EXPECT_NEAR(sb.gamma[c], gamma[c], 1e-12 * std::max(1.0, std::abs(gamma[c])));
      EXPECT_NEAR(sb.beta[c], beta[c], 1e-12 * std::max(1.0, std::abs(beta[c])));
    }
  }
}

TEST(DeriveScaleBiasTest, ShapeMismatchThrows) {
  const PassportLayer layer = ScalarLayer(2.0);
  EXPECT_THROW(DeriveScaleBias(layer, {Tensor({2, 1}), Tensor({2, 1}), {}}), ShapeError);
}

TEST(PassportForwardTest, ScalarExample) {
  const Tensor y = PassportForward(ScalarLayer(2.0), Tensor({1, 1}, {3}),
                                   PassportBinding::Shared(ScalarKey(0.5, 1.0)));
  EXPECT_EQ(y, Tensor({1, 1}, {8}));
}

// Identity autoencoder, W = I: s_gamma = 1 gives gamma = 1 and s_beta = 0
// gives beta = 0, so the slot reduces to the plain base map.
TEST(PassportForwardTest, NeutralPassportsMatchPlainForward) {
  PassportConfig cfg;
  cfg.shape = {3, 1};
  Linear base{3, 3, Tensor({3, 3}), Tensor()};
  base.weight.matrix().setIdentity();
  const PassportLayer layer{base, Autoencoder::Identity(3), cfg};
  const PassportKey key{Tensor::Constant({3, 1}, 1.0), Tensor({3, 1}), {}};
  Rng rng(9);
  const Tensor x = rng.NormalTensor({4, 3}, 0, 1);
  EXPECT_EQ(PassportForward(layer, x, PassportBinding::Shared(key)), Forward(base, x));
}

TEST(PassportForwardTest, NeutralFixedBindingMatchesPlainConv) {
  Rng rng(10);
  const PassportLayer layer = RandomConvLayer(rng, 2, 3, 3, 5);
  const Tensor x = rng.NormalTensor({2, 2, 5, 5}, 0, 1);
  EXPECT_EQ(PassportForward(layer, x, PassportBinding::Fixed(ScaleBias::Neutral(3))),
            Forward(std::get<Conv2d>(layer.base), x));
}

TEST(PassportForwardTest, LinearMatchesScalarLoopOracle) {
  Rng rng(11);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomLinearLayer(rng, 4, 5, 3);
    RandomizeAutoencoderBiases(layer, rng);
    const PassportKey key = SamplePassport(layer.config, rng);
    const Tensor x = rng.NormalTensor({3, 4}, 0, 1);
    const Tensor y = PassportForward(layer, x, PassportBinding::Shared(key));
    const auto gamma = LoopDerive(layer, key.s_gamma), beta = LoopDerive(layer, key.s_beta);
    for (Index b = 0; b < 3; ++b) {
      for (Index o = 0; o < 5; ++o) {
        double wx = 0;
        for (Index j = 0; j < 4; ++j) wx += layer.weight()[o * 4 + j] * x[b * 4 + j];
        EXPECT_NEAR(y[b * 5 + o], gamma[o] * wx + beta[o], 1e-12);
      }
    }
  }
}

TEST(PassportForwardTest, ConvMatchesScalarLoopOracle) {
  Rng rng(12);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomConvLayer(rng, 2, 2, 2, 4);
    RandomizeAutoencoderBiases(layer, rng);
    const PassportKey key = SamplePassport(layer.config, rng);
    const Tensor x = rng.NormalTensor({2, 2, 3, 4}, 0, 1);
    const Tensor y = PassportForward(layer, x, PassportBinding::Shared(key));
    const auto gamma = LoopDerive(layer, key.s_gamma), beta = LoopDerive(layer, key.s_beta);
    const Tensor& w = layer.weight();
    for (Index b = 0; b < 2; ++b) {
      for (Index o = 0; o < 2; ++o) {
        for (Index r = 0; r < 2; ++r) {
          for (Index q = 0; q < 3; ++q) {
            double acc = 0;
            for (Index c = 0; c < 2; ++c) {
              for (Index u = 0; u < 2; ++u) {
                for (Index v = 0; v < 2; ++v) {
                  acc += w[((o * 2 + c) * 2 + u) * 2 + v] * x[((b * 2 + c) * 3 + r + u) * 4 + q + v];
                }
              }
            }
            EXPECT_NEAR(y[((b * 2 + o) * 2 + r) * 3 + q], gamma[o] * acc + beta[o], 1e-12);
          }
        }
      }
    }
  }
}

TEST(PassportForwardTest, PerSampleKeysApplyRowWise) {
  Rng rng(13);
  const PassportLayer layer = RandomLinearLayer(rng, 3, 2, 1);
  const PassportKey k0 = SamplePassport(layer.config, rng), k1 = SamplePassport(layer.config, rng);
  const Tensor x = rng.NormalTensor({2, 3}, 0, 1);
  const Tensor both = PassportForward(layer, x, {{k0, k1}, {}});
  EXPECT_EQ(both.Row(0), PassportForward(layer, x.Row(0), PassportBinding::Shared(k0)));
  EXPECT_EQ(both.Row(1), PassportForward(layer, x.Row(1), PassportBinding::Shared(k1)));
  EXPECT_THROW(PassportForward(layer, rng.NormalTensor({3, 3}, 0, 1), {{k0, k1}, {}}),
               ShapeError);
  EXPECT_THROW(PassportForward(layer, x, PassportBinding{}), InvalidArgument);
}

TEST(PassportForwardTest, IndependentKeysGiveDifferentOutputs) {
  PassportConfig cfg;
  cfg.range = 50;
  cfg.sigma2 = 1;
  Rng rng(14);
  const PassportLayer layer = PassportLayer::Create(Linear::Create(6, 4, rng), cfg, rng);
  const Tensor x = rng.NormalTensor({2, 6}, 0, 1);
  for (int pair = 0; pair < 100; ++pair) {
    const PassportKey a = SamplePassport(layer.config, rng), b = SamplePassport(layer.config, rng);
    const Tensor ya = PassportForward(layer, x, PassportBinding::Shared(a));
    const Tensor yb = PassportForward(layer, x, PassportBinding::Shared(b));
    EXPECT_GT(MaxAbsDiff(ya, yb), 0.0);
  }
}

TEST(PassportLayerTest, CreateDropsBiasAndFillsShape) {
  Rng rng(15);
  const PassportLayer lin = PassportLayer::Create(Linear::Create(6, 8, rng), {}, rng);
  EXPECT_TRUE(std::get<Linear>(lin.base).bias.empty());
  EXPECT_EQ(lin.config.shape, (Shape{6, 1}));
  EXPECT_EQ(lin.autoencoder.hidden(), 2);
  const PassportLayer conv = PassportLayer::Create(Conv2d::Create(3, 4, 3, rng), {}, rng);
  EXPECT_EQ(conv.config.shape, (Shape{3, 5, 5}));
  PassportConfig bad;
  bad.shape = {5, 1};
  EXPECT_THROW(PassportLayer::Create(Linear::Create(6, 8, rng), bad, rng), ShapeError);
}

TEST(PassportBackwardTest, LinearMatchesFiniteDifferences) {
  Rng rng(16);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomLinearLayer(rng, 4, 3, 2);
    RandomizeAutoencoderBiases(layer, rng);
    Network net{{layer}};
    const PassportBindings b{{0, PassportBinding::Shared(SamplePassport(layer.config, rng))}};
    const Tensor x = rng.NormalTensor({3, 4}, 0, 1);
    EXPECT_LT(NetworkGradientError(net, x, b, rng.NormalTensor({3, 3}, 0, 1)), 1e-4);
  }
}

TEST(PassportBackwardTest, ConvMatchesFiniteDifferences) {
  Rng rng(17);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomConvLayer(rng, 2, 3, 2, 4);
    RandomizeAutoencoderBiases(layer, rng);
    Network net{{layer}};
    const PassportBindings b{{0, PassportBinding::Shared(SamplePassport(layer.config, rng))}};
    const Tensor x = rng.NormalTensor({2, 2, 4, 3}, 0, 1);
    EXPECT_LT(NetworkGradientError(net, x, b, rng.NormalTensor({2, 3, 3, 2}, 0, 1)), 1e-4);
  }
}

TEST(PassportBackwardTest, PerSampleKeysMatchFiniteDifferences) {
  Rng rng(18);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomLinearLayer(rng, 3, 2, 2);
    Network net{{layer}};
    PassportBinding binding;
    for (int k = 0; k < 3; ++k) binding.keys.push_back(SamplePassport(layer.config, rng));
    const PassportBindings b{{0, binding}};
    EXPECT_LT(NetworkGradientError(net, rng.NormalTensor({3, 3}, 0, 1), b,
                                   rng.NormalTensor({3, 2}, 0, 1)),
              1e-4);
  }
}

TEST(PassportBackwardTest, PassportGradientsMatchFiniteDifferences) {
  Rng rng(19);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomConvLayer(rng, 1, 2, 2, 3);
    RandomizeAutoencoderBiases(layer, rng);
    PassportBinding binding = PassportBinding::Shared(SamplePassport(layer.config, rng));
    const Tensor x = rng.NormalTensor({2, 1, 3, 3}, 0, 1);
    const Tensor probe = rng.NormalTensor({2, 2, 2, 2}, 0, 1);
    PassportCache cache;
    PassportForward(layer, x, binding, &cache);
    const PassportGradients g = PassportBackward(layer, cache, probe);
    auto loss = [&] { return PassportForward(layer, x, binding).vec().dot(probe.vec()); };
    EXPECT_LT(CheckGradient(loss, binding.keys[0].s_gamma, g.s_gamma[0]), 1e-4);
    EXPECT_LT(CheckGradient(loss, binding.keys[0].s_beta, g.s_beta[0]), 1e-4);
  }
}

TEST(PassportBackwardTest, FrozenScaleBiasLeavesOnlyWeightPath) {
  Rng rng(20);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomLinearLayer(rng, 4, 3, 2);
    const PassportKey key = SamplePassport(layer.config, rng);
    const Tensor x = rng.NormalTensor({2, 4}, 0, 1);
    const Tensor probe = rng.NormalTensor({2, 3}, 0, 1);

    PassportCache keyed, frozen;
    PassportForward(layer, x, PassportBinding::Shared(key), &keyed);
    PassportForward(layer, x, PassportBinding::Fixed(DeriveScaleBias(layer, key)), &frozen);
    const WeightGradientPaths paths = PassportWeightGradientPaths(layer, keyed, probe);
    const PassportGradients g = PassportBackward(layer, frozen, probe);
    EXPECT_LT(MaxAbsDiff(g.weight, paths.w_path), 1e-12);
    EXPECT_EQ(g.encoder_weight.vec().squaredNorm(), 0.0);
    EXPECT_EQ(g.decoder_bias.vec().squaredNorm(), 0.0);
    EXPECT_TRUE(g.s_gamma.empty());

    // Oracle for the W path: finite differences with gamma and beta held fixed.
    Network fixed_net{{layer}};
    const PassportBindings fb{{0, PassportBinding::Fixed(DeriveScaleBias(layer, key))}};
    auto loss = [&] { return testing::ProbeLoss(fixed_net, x, fb, probe); };
    EXPECT_LT(CheckGradient(loss, std::get<PassportLayer>(fixed_net.layers[0]).weight(),
                            paths.w_path),
              1e-4);
  }
}

TEST(PassportBackwardTest, PathSumEqualsMonolithicGradient) {
  Rng rng(21);
  for (int i = 0; i < kInstances; ++i) {
    const bool conv = i % 2 == 1;
    PassportLayer layer = conv ? RandomConvLayer(rng, 2, 3, 2, 4) : RandomLinearLayer(rng, 5, 4, 3);
    RandomizeAutoencoderBiases(layer, rng);
    PassportBinding binding;
    binding.keys.push_back(SamplePassport(layer.config, rng));
    if (i % 4 == 0) binding.keys.push_back(SamplePassport(layer.config, rng));
    const Tensor x = conv ? rng.NormalTensor({2, 2, 4, 4}, 0, 1) : rng.NormalTensor({2, 5}, 0, 1);
    PassportCache cache;
    const Tensor y = PassportForward(layer, x, binding, &cache);
    const Tensor probe = rng.NormalTensor(y.shape(), 0, 1);
    const WeightGradientPaths p = PassportWeightGradientPaths(layer, cache, probe);
    const PassportGradients g = PassportBackward(layer, cache, probe);
    const Tensor sum(g.weight.shape(), p.w_path.vec() + p.gamma_path.vec() + p.beta_path.vec());
    EXPECT_LT(MaxAbsDiff(sum, g.weight), 1e-10);
    EXPECT_GT(p.gamma_path.vec().norm(), 0.0);
    EXPECT_GT(p.beta_path.vec().norm(), 0.0);
  }
}

TEST(PassportBackwardTest, BetaPathMatchesFiniteDifferencesOfBeta) {
  Rng rng(22);
  for (int i = 0; i < kInstances; ++i) {
    PassportLayer layer = RandomLinearLayer(rng, 3, 3, 2);
    RandomizeAutoencoderBiases(layer, rng);
    const PassportKey key = SamplePassport(layer.config, rng);
    const Tensor x = rng.NormalTensor({2, 3}, 0, 1);
    PassportCache cache;
    const Tensor y = PassportForward(layer, x, PassportBinding::Shared(key), &cache);
    const Tensor probe = rng.NormalTensor(y.shape(), 0, 1);
    const WeightGradientPaths p = PassportWeightGradientPaths(layer, cache, probe);
    // d/dW of sum_b sum_o probe[b,o] * beta_o(W).
    const Vector col_sum = probe.matrix().colwise().sum().transpose();
    auto loss = [&] { return col_sum.dot(DerivePassportValue(layer, key.s_beta).value); };
    EXPECT_LT(CheckGradient(loss, layer.weight(), p.beta_path), 1e-4);
  }
}

TEST(PassportBackwardTest, CacheMismatchThrows) {
  Rng rng(23);
  const PassportLayer layer = RandomLinearLayer(rng, 3, 2, 1);
  PassportCache cache;
  PassportForward(layer, rng.NormalTensor({2, 3}, 0, 1),
                  PassportBinding::Shared(SamplePassport(layer.config, rng)), &cache);
  EXPECT_THROW(PassportBackward(layer, cache, Tensor({3, 2})), ShapeError);
}

}  // namespace
}  // namespace fedpass
