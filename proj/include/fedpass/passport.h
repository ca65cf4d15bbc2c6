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

// Passport layers: adaptive obfuscation of a Linear or Conv2d layer.
//
//   out   = gamma * (W x) + beta            (per output channel)
//   gamma = Avg(D(E(W s_gamma)))
//   beta  = Avg(D(E(W s_beta)))
//
// W is the wrapped layer's weight, E/D a linear autoencoder, and Avg the mean
// over passport positions (spatial positions for convolutions, passport
// columns for linear layers). The passports s_gamma and s_beta are secret and
// never stored in the layer itself; callers bind them per forward pass.

#ifndef FEDPASS_PASSPORT_H_
#define FEDPASS_PASSPORT_H_

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "fedpass/layers.h"
#include "fedpass/random.h"
#include "fedpass/tensor.h"

namespace fedpass {

enum class PassportScope { kPerBatch, kPerSample };

// Sampling law for passports: channel means mu_j ~ U(-N, 0), then every element
// of channel j ~ Normal(mu_j, sigma2).
struct PassportConfig {
  double range = 50.0;   // N
  double sigma2 = 1.0;
  // Linear: {in_dim, columns}; Conv2d: {in_channels, height, width}. The
  // leading axis indexes channels.
  Shape shape;
  PassportScope scope = PassportScope::kPerBatch;
  // When false, a party draws its channel means once and only the Gaussian
  // elements are redrawn per round (or per sample).
  bool resample_means = false;

  Index channels() const { return shape.empty() ? 0 : shape.front(); }
  Index elements() const { return NumElements(shape); }
  void Validate() const;
};

struct PassportKey {
  Tensor s_gamma;
  Tensor s_beta;
  std::vector<double> channel_means;
};

// Minimum separation enforced between channel means.
inline constexpr double kMeanSeparation = 1e-9;

std::vector<double> SampleChannelMeans(const PassportConfig& config, Rng& rng);
// Draws fresh channel means and elements.
PassportKey SamplePassport(const PassportConfig& config, Rng& rng);
// Draws elements around the given channel means.
PassportKey SamplePassport(const PassportConfig& config,
                           std::span<const double> channel_means, Rng& rng);

// Linear encoder to `hidden` units and linear decoder back, both with bias.
struct Autoencoder {
  Linear encoder;
  Linear decoder;

  Index dim() const { return encoder.in_dim; }
  Index hidden() const { return encoder.out_dim; }

  static Index DefaultHidden(Index dim);
  static Autoencoder Create(Index dim, Index hidden, Rng& rng);
  static Autoencoder Identity(Index dim);
};

struct PassportLayer {
  std::variant<Linear, Conv2d> base;  // Bias-free; beta plays the bias role.
  Autoencoder autoencoder;
  PassportConfig config;

  Index out_channels() const;
  Index in_channels() const;
  bool is_conv() const { return std::holds_alternative<Conv2d>(base); }
  const Tensor& weight() const;
  Tensor& weight();

  // Fresh bias-free base with Glorot weights and a default-sized autoencoder.
  // `config.shape` is filled with the default passport shape if empty.
  static PassportLayer Create(Linear base, PassportConfig config, Rng& rng);
  static PassportLayer Create(Conv2d base, PassportConfig config, Rng& rng);
  static Shape DefaultPassportShape(const Linear& base);
  static Shape DefaultPassportShape(const Conv2d& base);
};

// Explicit per-channel scale and bias, bypassing passport derivation. Used for
// attacker guesses and for treating gamma/beta as constants.
struct ScaleBias {
  Vector gamma;
  Vector beta;

  static ScaleBias Neutral(Index channels) {
    return {Vector::Ones(channels), Vector::Zero(channels)};
  }
};

// What a passport layer is evaluated with: either keys (one shared by the
// batch, or one per sample) or a fixed scale/bias.
struct PassportBinding {
  std::vector<PassportKey> keys;
  std::optional<ScaleBias> fixed;

  static PassportBinding Shared(PassportKey key) { return {{std::move(key)}, {}}; }
  static PassportBinding Fixed(ScaleBias sb) { return {{}, std::move(sb)}; }
};

// Intermediate values of one Avg(D(E(W s))) evaluation.
struct PassportDerivation {
  Matrix projected;  // W s, [positions x channels]
  Matrix hidden;     // E(W s), [positions x hidden]
  Vector value;      // gamma or beta, [channels]
};

PassportDerivation DerivePassportValue(const PassportLayer& layer, const Tensor& passport);
ScaleBias DeriveScaleBias(const PassportLayer& layer, const PassportKey& key);

struct PassportCache {
  Tensor input;
  Tensor pre_scale;  // W x
  PassportBinding binding;
  std::vector<PassportDerivation> gamma;  // One per key.
  std::vector<PassportDerivation> beta;
};

Shape OutputShape(const PassportLayer& layer, const Shape& in);

Tensor PassportForward(const PassportLayer& layer, const Tensor& x,
                       const PassportBinding& binding, PassportCache* cache = nullptr);

struct PassportGradients {
  Tensor weight;
  Tensor encoder_weight;
  Tensor encoder_bias;
  Tensor decoder_weight;
  Tensor decoder_bias;
  Tensor input;
  // d/ds for each bound key; empty under a fixed binding.
  std::vector<Tensor> s_gamma;
  std::vector<Tensor> s_beta;
  // d/dgamma and d/dbeta under a fixed binding only.
  std::optional<ScaleBias> fixed;
};

PassportGradients PassportBackward(const PassportLayer& layer, const PassportCache& cache,
                                   const Tensor& out_grad);

// The weight gradient split along its three backpropagation routes.
struct WeightGradientPaths {
  Tensor w_path;      // Through W x.
  Tensor gamma_path;  // Through gamma = Avg(D(E(W s_gamma))).
  Tensor beta_path;   // Through beta = Avg(D(E(W s_beta))).
};

WeightGradientPaths PassportWeightGradientPaths(const PassportLayer& layer,
                                                const PassportCache& cache,
                                                const Tensor& out_grad);

// Parameter order: weight, encoder weight, encoder bias, decoder weight,
// decoder bias.
std::vector<Tensor*> Parameters(PassportLayer& layer);

}  // namespace fedpass

#endif  // FEDPASS_PASSPORT_H_
