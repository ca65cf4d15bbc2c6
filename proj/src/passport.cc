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

#include <cmath>
#include <optional>
#include <string>

namespace fedpass {
namespace {

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

// [positions x channels] passport gradient reshaped to a [1 x C x h x w] conv
// output gradient.
Tensor ConvOutputGrad(const Conv2d& base, const Tensor& s, const Matrix& dp) {
  const Index oh = s.dim(1) - base.kernel + 1;
  const Index ow = s.dim(2) - base.kernel + 1;
  Tensor g({1, base.out_channels, oh, ow});
  g.matrix(base.out_channels, oh * ow) = dp.transpose();
  return g;
}

// W s as a [positions x channels] matrix.
Matrix ProjectPassport(const PassportLayer& layer, const Tensor& s) {
  return std::visit(
      Overloaded{
          [&](const Linear& base) -> Matrix {
            const auto sm = s.matrix(base.in_dim, s.size() / base.in_dim);
            return sm.transpose() *
                   base.weight.matrix(base.out_dim, base.in_dim).transpose();
          },
          [&](const Conv2d& base) -> Matrix {
            const Tensor z = ConvMap(base, s.Reshaped({1, s.dim(0), s.dim(1), s.dim(2)}));
            return z.matrix(base.out_channels, z.size() / base.out_channels).transpose();
          }},
      layer.base);
}

Tensor ProjectWeightGrad(const PassportLayer& layer, const Tensor& s, const Matrix& dp) {
  return std::visit(
      Overloaded{
          [&](const Linear& base) -> Tensor {
            Tensor dw({base.out_dim, base.in_dim});
            dw.matrix().noalias() =
                dp.transpose() * s.matrix(base.in_dim, s.size() / base.in_dim).transpose();
            return dw;
          },
          [&](const Conv2d& base) -> Tensor {
            const Tensor x = s.Reshaped({1, s.dim(0), s.dim(1), s.dim(2)});
            const Tensor g = ConvOutputGrad(base, s, dp);
            return ConvMapWeightGrad(base, x, g);
          }},
      layer.base);
}

Tensor ProjectInputGrad(const PassportLayer& layer, const Tensor& s, const Matrix& dp) {
  return std::visit(
      Overloaded{
          [&](const Linear& base) -> Tensor {
            Tensor ds(s.shape());
            ds.matrix(base.in_dim, s.size() / base.in_dim).noalias() =
                (dp * base.weight.matrix(base.out_dim, base.in_dim)).transpose();
            return ds;
          },
          [&](const Conv2d& base) -> Tensor {
            const Shape in_shape{1, s.dim(0), s.dim(1), s.dim(2)};
            const Tensor g = ConvOutputGrad(base, s, dp);
            return ConvMapInputGrad(base, g, in_shape).Reshaped(s.shape());
          }},
      layer.base);
}

// Accumulated autoencoder gradients.
struct AutoencoderGrads {
  Matrix encoder_weight;
  Vector encoder_bias;
  Matrix decoder_weight;
  Vector decoder_bias;

  explicit AutoencoderGrads(const Autoencoder& ae)
      : encoder_weight(Matrix::Zero(ae.hidden(), ae.dim())),
        encoder_bias(Vector::Zero(ae.hidden())),
        decoder_weight(Matrix::Zero(ae.dim(), ae.hidden())),
        decoder_bias(Vector::Zero(ae.dim())) {}
};

// Reverse pass of Avg(D(E(P))) for a value gradient `dv`; returns dP.
Matrix DerivationBackward(const Autoencoder& ae, const PassportDerivation& d,
                          const Vector& dv, AutoencoderGrads& grads) {
  const auto enc = ae.encoder.weight.matrix(ae.hidden(), ae.dim());
  const auto dec = ae.decoder.weight.matrix(ae.dim(), ae.hidden());
  const double inv_positions = 1.0 / static_cast<double>(d.projected.rows());
  grads.decoder_weight.noalias() +=
      dv * (d.hidden.colwise().sum() * inv_positions);
  grads.decoder_bias += dv;
  // Every position receives the same upstream gradient dv / positions.
  const Vector dhidden_row = dec.transpose() * dv * inv_positions;
  grads.encoder_weight.noalias() +=
      dhidden_row * d.projected.colwise().sum();
  grads.encoder_bias += dhidden_row * static_cast<double>(d.projected.rows());
  const Eigen::RowVectorXd dp_row = dhidden_row.transpose() * enc;
  return dp_row.replicate(d.projected.rows(), 1);
}

struct ChannelLayout {
  Index batch;
  Index channels;
  Index spatial;
};

ChannelLayout LayoutOf(const PassportLayer& layer, const Tensor& z) {
  const Index batch = z.dim(0);
  const Index channels = layer.out_channels();
  return {batch, channels, z.size() / (batch * channels)};
}

// Shared reverse-pass state of a passport layer.
struct BackwardState {
  Tensor dz;
  std::optional<ScaleBias> d_fixed;
  std::vector<Matrix> dp_gamma;
  std::vector<Matrix> dp_beta;
  AutoencoderGrads ae;
};

BackwardState ComputeBackwardState(const PassportLayer& layer, const PassportCache& cache,
                                   const Tensor& out_grad) {
  if (out_grad.shape() != cache.pre_scale.shape()) {
    throw ShapeError("passport out_grad " + ShapeString(out_grad.shape()) +
                     " does not match forward output " +
                     ShapeString(cache.pre_scale.shape()));
  }
  const Tensor& z = cache.pre_scale;
  const ChannelLayout lay = LayoutOf(layer, z);
  const bool fixed = cache.binding.fixed.has_value();
  const std::size_t n_keys = fixed ? 1 : cache.binding.keys.size();

  BackwardState state{Tensor(z.shape()), std::nullopt, {}, {}, AutoencoderGrads(layer.autoencoder)};
  std::vector<Vector> dgamma(n_keys, Vector::Zero(lay.channels));
  std::vector<Vector> dbeta(n_keys, Vector::Zero(lay.channels));
  for (Index b = 0; b < lay.batch; ++b) {
    const std::size_t k = n_keys == 1 ? 0 : static_cast<std::size_t>(b);
    const Vector& gamma = fixed ? cache.binding.fixed->gamma : cache.gamma[k].value;
    for (Index c = 0; c < lay.channels; ++c) {
      const Index offset = (b * lay.channels + c) * lay.spatial;
      const auto g = out_grad.vec().segment(offset, lay.spatial);
      const auto zs = z.vec().segment(offset, lay.spatial);
      dgamma[k][c] += g.dot(zs);
      dbeta[k][c] += g.sum();
      state.dz.vec().segment(offset, lay.spatial) = gamma[c] * g;
    }
  }
  if (fixed) {
    state.d_fixed = ScaleBias{dgamma[0], dbeta[0]};
  } else {
    for (std::size_t k = 0; k < n_keys; ++k) {
      state.dp_gamma.push_back(
          DerivationBackward(layer.autoencoder, cache.gamma[k], dgamma[k], state.ae));
      state.dp_beta.push_back(
          DerivationBackward(layer.autoencoder, cache.beta[k], dbeta[k], state.ae));
    }
  }
  return state;
}

Tensor BaseWeightGrad(const PassportLayer& layer, const Tensor& x, const Tensor& dz) {
  return std::visit(
      Overloaded{[&](const Linear& base) { return LinearMapWeightGrad(base, x, dz); },
                 [&](const Conv2d& base) { return ConvMapWeightGrad(base, x, dz); }},
      layer.base);
}

Tensor FromMatrix(const Matrix& m) {
  Tensor t({m.rows(), m.cols()});
  t.matrix() = m;
  return t;
}

}  // namespace

void PassportConfig::Validate() const {
  if (!(range > 0.0)) throw InvalidArgument("passport range N must be positive");
  if (!(sigma2 >= 0.0)) throw InvalidArgument("passport variance must be non-negative");
  if (shape.empty()) throw InvalidArgument("passport shape is empty");
  for (Index d : shape) {
    if (d <= 0) throw InvalidArgument("passport shape " + ShapeString(shape));
  }
}

std::vector<double> SampleChannelMeans(const PassportConfig& config, Rng& rng) {
  config.Validate();
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(config.channels()));
  while (static_cast<Index>(means.size()) < config.channels()) {
    const double mu = rng.Uniform(-config.range, 0.0);
    bool collides = mu <= -config.range || mu >= 0.0;
    for (double other : means) collides = collides || std::abs(mu - other) <= kMeanSeparation;
    if (!collides) means.push_back(mu);
  }
  return means;
}

PassportKey SamplePassport(const PassportConfig& config, Rng& rng) {
  const std::vector<double> means = SampleChannelMeans(config, rng);
  return SamplePassport(config, means, rng);
}

PassportKey SamplePassport(const PassportConfig& config,
                           std::span<const double> channel_means, Rng& rng) {
  config.Validate();
  if (static_cast<Index>(channel_means.size()) != config.channels()) {
    throw InvalidArgument("expected " + std::to_string(config.channels()) +
                          " channel means, got " + std::to_string(channel_means.size()));
  }
  const double stddev = std::sqrt(config.sigma2);
  const Index per_channel = config.elements() / config.channels();
  PassportKey key{Tensor(config.shape), Tensor(config.shape),
                  {channel_means.begin(), channel_means.end()}};
  for (Index j = 0; j < config.channels(); ++j) {
    for (Index e = 0; e < per_channel; ++e) {
      key.s_gamma[j * per_channel + e] = rng.Normal(channel_means[j], stddev);
    }
  }
  for (Index j = 0; j < config.channels(); ++j) {
    for (Index e = 0; e < per_channel; ++e) {
      key.s_beta[j * per_channel + e] = rng.Normal(channel_means[j], stddev);
    }
  }
  return key;
}

Index Autoencoder::DefaultHidden(Index dim) { return std::max<Index>(1, (dim + 3) / 4); }

Autoencoder Autoencoder::Create(Index dim, Index hidden, Rng& rng) {
  Autoencoder ae;
  ae.encoder = Linear::Create(dim, hidden, rng);
  ae.decoder = Linear::Create(hidden, dim, rng);
  return ae;
}

Autoencoder Autoencoder::Identity(Index dim) {
  Autoencoder ae;
  ae.encoder = {dim, dim, Tensor({dim, dim}), Tensor({dim})};
  ae.decoder = {dim, dim, Tensor({dim, dim}), Tensor({dim})};
  ae.encoder.weight.matrix().setIdentity();
  ae.decoder.weight.matrix().setIdentity();
  return ae;
}

Index PassportLayer::out_channels() const {
  return std::visit(Overloaded{[](const Linear& l) { return l.out_dim; },
                               [](const Conv2d& c) { return c.out_channels; }},
                    base);
}

Index PassportLayer::in_channels() const {
  return std::visit(Overloaded{[](const Linear& l) { return l.in_dim; },
                               [](const Conv2d& c) { return c.in_channels; }},
                    base);
}

const Tensor& PassportLayer::weight() const {
  return std::visit([](const auto& b) -> const Tensor& { return b.weight; }, base);
}

Tensor& PassportLayer::weight() {
  return std::visit([](auto& b) -> Tensor& { return b.weight; }, base);
}

Shape PassportLayer::DefaultPassportShape(const Linear& base) { return {base.in_dim, 1}; }

Shape PassportLayer::DefaultPassportShape(const Conv2d& base) {
  return {base.in_channels, base.kernel + 2, base.kernel + 2};
}

PassportLayer PassportLayer::Create(Linear base, PassportConfig config, Rng& rng) {
  base.bias = Tensor();
  if (config.shape.empty()) config.shape = DefaultPassportShape(base);
  if (config.shape.size() != 2 || config.shape[0] != base.in_dim) {
    throw ShapeError("linear passport shape must be {" + std::to_string(base.in_dim) +
                     ", h}, got " + ShapeString(config.shape));
  }
  config.Validate();
  const Index out = base.out_dim;
  return {std::move(base), Autoencoder::Create(out, Autoencoder::DefaultHidden(out), rng),
          std::move(config)};
}

PassportLayer PassportLayer::Create(Conv2d base, PassportConfig config, Rng& rng) {
  base.bias = Tensor();
  if (config.shape.empty()) config.shape = DefaultPassportShape(base);
  if (config.shape.size() != 3 || config.shape[0] != base.in_channels ||
      config.shape[1] < base.kernel || config.shape[2] < base.kernel) {
    throw ShapeError("conv passport shape must be {" + std::to_string(base.in_channels) +
                     ", h>=k, w>=k}, got " + ShapeString(config.shape));
  }
  config.Validate();
  const Index out = base.out_channels;
  return {std::move(base), Autoencoder::Create(out, Autoencoder::DefaultHidden(out), rng),
          std::move(config)};
}

PassportDerivation DerivePassportValue(const PassportLayer& layer, const Tensor& passport) {
  if (passport.shape() != layer.config.shape) {
    throw ShapeError("passport " + ShapeString(passport.shape()) + " does not match " +
                     ShapeString(layer.config.shape));
  }
  const Autoencoder& ae = layer.autoencoder;
  if (ae.dim() != layer.out_channels()) {
    throw ShapeError("autoencoder width " + std::to_string(ae.dim()) +
                     " does not match layer channels " +
                     std::to_string(layer.out_channels()));
  }
  PassportDerivation d;
  d.projected = ProjectPassport(layer, passport);
  d.hidden = d.projected * ae.encoder.weight.matrix(ae.hidden(), ae.dim()).transpose();
  d.hidden.rowwise() += ae.encoder.bias.vec().transpose();
  Matrix decoded = d.hidden * ae.decoder.weight.matrix(ae.dim(), ae.hidden()).transpose();
  decoded.rowwise() += ae.decoder.bias.vec().transpose();
  d.value = decoded.colwise().mean().transpose();
  return d;
}

ScaleBias DeriveScaleBias(const PassportLayer& layer, const PassportKey& key) {
  return {DerivePassportValue(layer, key.s_gamma).value,
          DerivePassportValue(layer, key.s_beta).value};
}

Shape OutputShape(const PassportLayer& layer, const Shape& in) {
  return std::visit([&](const auto& base) { return OutputShape(base, in); }, layer.base);
}

Tensor PassportForward(const PassportLayer& layer, const Tensor& x,
                       const PassportBinding& binding, PassportCache* cache) {
  Tensor z = std::visit(
      Overloaded{[&](const Linear& base) { return LinearMap(base, x); },
                 [&](const Conv2d& base) { return ConvMap(base, x); }},
      layer.base);
  const ChannelLayout lay = LayoutOf(layer, z);

  std::vector<PassportDerivation> gammas;
  std::vector<PassportDerivation> betas;
  if (binding.fixed) {
    if (binding.fixed->gamma.size() != lay.channels ||
        binding.fixed->beta.size() != lay.channels) {
      throw ShapeError("fixed scale/bias must have " + std::to_string(lay.channels) +
                       " entries");
    }
  } else {
    if (binding.keys.empty()) throw InvalidArgument("passport layer evaluated without keys");
    if (binding.keys.size() != 1 && static_cast<Index>(binding.keys.size()) != lay.batch) {
      throw ShapeError("passport binding has " + std::to_string(binding.keys.size()) +
                       " keys for a batch of " + std::to_string(lay.batch));
    }
    for (const PassportKey& key : binding.keys) {
      gammas.push_back(DerivePassportValue(layer, key.s_gamma));
      betas.push_back(DerivePassportValue(layer, key.s_beta));
    }
  }

  Tensor out = z;
  for (Index b = 0; b < lay.batch; ++b) {
    const std::size_t k =
        binding.fixed || binding.keys.size() == 1 ? 0 : static_cast<std::size_t>(b);
    const Vector& gamma = binding.fixed ? binding.fixed->gamma : gammas[k].value;
    const Vector& beta = binding.fixed ? binding.fixed->beta : betas[k].value;
    for (Index c = 0; c < lay.channels; ++c) {
      auto seg = out.vec().segment((b * lay.channels + c) * lay.spatial, lay.spatial);
      seg = (gamma[c] * seg.array() + beta[c]).matrix();
    }
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->pre_scale = std::move(z);
    cache->binding = binding;
    cache->gamma = std::move(gammas);
    cache->beta = std::move(betas);
  }
  return out;
}

PassportGradients PassportBackward(const PassportLayer& layer, const PassportCache& cache,
                                   const Tensor& out_grad) {
  BackwardState state = ComputeBackwardState(layer, cache, out_grad);
  PassportGradients grads;
  grads.input = std::visit(
      Overloaded{[&](const Linear& base) { return LinearMapInputGrad(base, state.dz); },
                 [&](const Conv2d& base) {
                   return ConvMapInputGrad(base, state.dz, cache.input.shape());
                 }},
      layer.base);

  // All three routes feed one accumulation: for a linear base the inputs x,
  // s_gamma^T, s_beta^T and their upstream gradients are stacked row-wise and
  // reduced by a single product.
  const auto& keys = cache.binding.keys;
  grads.weight = std::visit(
      Overloaded{
          [&](const Linear& base) -> Tensor {
            Index rows = state.dz.dim(0);
            for (const Matrix& dp : state.dp_gamma) rows += dp.rows();
            for (const Matrix& dp : state.dp_beta) rows += dp.rows();
            Matrix inputs(rows, base.in_dim);
            Matrix upstream(rows, base.out_dim);
            Index r = 0;
            inputs.topRows(state.dz.dim(0)) = cache.input.matrix();
            upstream.topRows(state.dz.dim(0)) = state.dz.matrix();
            r = state.dz.dim(0);
            auto append = [&](const Tensor& s, const Matrix& dp) {
              inputs.middleRows(r, dp.rows()) =
                  s.matrix(base.in_dim, dp.rows()).transpose();
              upstream.middleRows(r, dp.rows()) = dp;
              r += dp.rows();
            };
            for (std::size_t k = 0; k < state.dp_gamma.size(); ++k) {
              append(keys[k].s_gamma, state.dp_gamma[k]);
            }
            for (std::size_t k = 0; k < state.dp_beta.size(); ++k) {
              append(keys[k].s_beta, state.dp_beta[k]);
            }
            return FromMatrix(upstream.transpose() * inputs);
          },
          [&](const Conv2d& base) -> Tensor {
            Tensor dw = ConvMapWeightGrad(base, cache.input, state.dz);
            for (std::size_t k = 0; k < state.dp_gamma.size(); ++k) {
              dw.vec() += ProjectWeightGrad(layer, keys[k].s_gamma, state.dp_gamma[k]).vec();
              dw.vec() += ProjectWeightGrad(layer, keys[k].s_beta, state.dp_beta[k]).vec();
            }
            return dw;
          }},
      layer.base);

  for (std::size_t k = 0; k < state.dp_gamma.size(); ++k) {
    grads.s_gamma.push_back(ProjectInputGrad(layer, keys[k].s_gamma, state.dp_gamma[k]));
    grads.s_beta.push_back(ProjectInputGrad(layer, keys[k].s_beta, state.dp_beta[k]));
  }
  grads.fixed = std::move(state.d_fixed);
  grads.encoder_weight = FromMatrix(state.ae.encoder_weight);
  grads.encoder_bias = Tensor({state.ae.encoder_bias.size()}, state.ae.encoder_bias);
  grads.decoder_weight = FromMatrix(state.ae.decoder_weight);
  grads.decoder_bias = Tensor({state.ae.decoder_bias.size()}, state.ae.decoder_bias);
  return grads;
}

WeightGradientPaths PassportWeightGradientPaths(const PassportLayer& layer,
                                                const PassportCache& cache,
                                                const Tensor& out_grad) {
  const BackwardState state = ComputeBackwardState(layer, cache, out_grad);
  WeightGradientPaths paths;
  paths.w_path = BaseWeightGrad(layer, cache.input, state.dz);
  paths.gamma_path = Tensor(layer.weight().shape());
  paths.beta_path = Tensor(layer.weight().shape());
  for (std::size_t k = 0; k < state.dp_gamma.size(); ++k) {
    const PassportKey& key = cache.binding.keys[k];
    paths.gamma_path.vec() += ProjectWeightGrad(layer, key.s_gamma, state.dp_gamma[k]).vec();
    paths.beta_path.vec() += ProjectWeightGrad(layer, key.s_beta, state.dp_beta[k]).vec();
  }
  return paths;
}

std::vector<Tensor*> Parameters(PassportLayer& layer) {
  return {&layer.weight(), &layer.autoencoder.encoder.weight,
          &layer.autoencoder.encoder.bias, &layer.autoencoder.decoder.weight,
          &layer.autoencoder.decoder.bias};
}

}  // namespace fedpass
