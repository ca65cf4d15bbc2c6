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

#include "fedpass/layers.h"

#include <cmath>
#include <string>

namespace fedpass {
namespace {

double GlorotLimit(Index fan_in, Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void ExpectRank(const Shape& in, std::size_t rank, const char* layer) {
  if (in.size() != rank) {
    throw ShapeError(std::string(layer) + " expects rank-" + std::to_string(rank) +
                     " input, got " + ShapeString(in));
  }
}

// Unfolds one [C x H x W] image into a [(C*k*k) x (Ho*Wo)] patch matrix.
Matrix Im2Col(const double* image, Index channels, Index height, Index width,
              Index k) {
  const Index out_h = height - k + 1;
  const Index out_w = width - k + 1;
  Matrix cols(channels * k * k, out_h * out_w);
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Index row = (c * k + ki) * k + kj;
        for (Index oi = 0; oi < out_h; ++oi) {
          const double* src = image + c * height * width + (oi + ki) * width + kj;
          for (Index oj = 0; oj < out_w; ++oj) cols(row, oi * out_w + oj) = src[oj];
        }
      }
    }
  }
  return cols;
}

void Col2ImAdd(const Matrix& cols, Index channels, Index height, Index width, Index k,
               double* image) {
  const Index out_h = height - k + 1;
  const Index out_w = width - k + 1;
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Index row = (c * k + ki) * k + kj;
        for (Index oi = 0; oi < out_h; ++oi) {
          double* dst = image + c * height * width + (oi + ki) * width + kj;
          for (Index oj = 0; oj < out_w; ++oj) dst[oj] += cols(row, oi * out_w + oj);
        }
      }
    }
  }
}

}  // namespace

Linear Linear::Create(Index in_dim, Index out_dim, Rng& rng, bool with_bias) {
  Linear layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  const double limit = GlorotLimit(in_dim, out_dim);
  layer.weight = rng.UniformTensor({out_dim, in_dim}, -limit, limit);
  if (with_bias) layer.bias = Tensor::Zeros({out_dim});
  return layer;
}

Conv2d Conv2d::Create(Index in_channels, Index out_channels, Index kernel, Rng& rng,
                      bool with_bias) {
  Conv2d layer;
  layer.in_channels = in_channels;
  layer.out_channels = out_channels;
  layer.kernel = kernel;
  const double limit =
      GlorotLimit(in_channels * kernel * kernel, out_channels * kernel * kernel);
  layer.weight =
      rng.UniformTensor({out_channels, in_channels, kernel, kernel}, -limit, limit);
  if (with_bias) layer.bias = Tensor::Zeros({out_channels});
  return layer;
}

Shape OutputShape(const Linear& layer, const Shape& in) {
  ExpectRank(in, 2, "Linear");
  if (in[1] != layer.in_dim) {
    throw ShapeError("Linear expects " + std::to_string(layer.in_dim) +
                     " input features, got " + ShapeString(in));
  }
  return {in[0], layer.out_dim};
}

Shape OutputShape(const Conv2d& layer, const Shape& in) {
  ExpectRank(in, 4, "Conv2d");
  if (in[1] != layer.in_channels) {
    throw ShapeError("Conv2d expects " + std::to_string(layer.in_channels) +
                     " channels, got " + ShapeString(in));
  }
  if (in[2] < layer.kernel || in[3] < layer.kernel) {
    throw ShapeError("Conv2d kernel " + std::to_string(layer.kernel) +
                     " larger than input " + ShapeString(in));
  }
  return {in[0], layer.out_channels, in[2] - layer.kernel + 1, in[3] - layer.kernel + 1};
}

Shape OutputShape(const Relu&, const Shape& in) { return in; }

Shape OutputShape(const Standardize& layer, const Shape& in) {
  if (in.size() < 2) throw ShapeError("Standardize expects a batched input");
  if (!(layer.epsilon > 0)) throw InvalidArgument("Standardize epsilon must be > 0");
  return in;
}

Shape OutputShape(const Flatten&, const Shape& in) {
  if (in.size() < 2) throw ShapeError("Flatten expects a batched input");
  Shape rest(in.begin() + 1, in.end());
  return {in[0], NumElements(rest)};
}

Shape OutputShape(const AvgPool2d& layer, const Shape& in) {
  ExpectRank(in, 4, "AvgPool2d");
  if (in[2] < layer.window || in[3] < layer.window) {
    throw ShapeError("AvgPool2d window larger than input " + ShapeString(in));
  }
  return {in[0], in[1], in[2] / layer.window, in[3] / layer.window};
}

Tensor LinearMap(const Linear& layer, const Tensor& x) {
  Tensor out(OutputShape(layer, x.shape()));
  out.matrix().noalias() =
      x.matrix() * layer.weight.matrix(layer.out_dim, layer.in_dim).transpose();
  return out;
}

Tensor LinearMapInputGrad(const Linear& layer, const Tensor& out_grad) {
  Tensor dx({out_grad.dim(0), layer.in_dim});
  dx.matrix().noalias() =
      out_grad.matrix() * layer.weight.matrix(layer.out_dim, layer.in_dim);
  return dx;
}

Tensor LinearMapWeightGrad(const Linear& layer, const Tensor& x, const Tensor& out_grad) {
  Tensor dw({layer.out_dim, layer.in_dim});
  dw.matrix().noalias() = out_grad.matrix().transpose() * x.matrix();
  return dw;
}

Tensor ConvMap(const Conv2d& layer, const Tensor& x) {
  const Shape out_shape = OutputShape(layer, x.shape());
  const Index batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index k = layer.kernel;
  const Index positions = out_shape[2] * out_shape[3];
  const auto wm = layer.weight.matrix(layer.out_channels, c * k * k);
  Tensor out(out_shape);
  for (Index b = 0; b < batch; ++b) {
    const Matrix cols = Im2Col(x.data() + b * c * h * w, c, h, w, k);
    Eigen::Map<Matrix> dst(out.data() + b * layer.out_channels * positions,
                           layer.out_channels, positions);
    dst.noalias() = wm * cols;
  }
  return out;
}

Tensor ConvMapInputGrad(const Conv2d& layer, const Tensor& out_grad,
                        const Shape& in_shape) {
  const Index batch = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
  const Index k = layer.kernel;
  const Index positions = out_grad.dim(2) * out_grad.dim(3);
  const auto wm = layer.weight.matrix(layer.out_channels, c * k * k);
  Tensor dx(in_shape);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const Matrix> g(out_grad.data() + b * layer.out_channels * positions,
                               layer.out_channels, positions);
    const Matrix dcols = wm.transpose() * g;
    Col2ImAdd(dcols, c, h, w, k, dx.data() + b * c * h * w);
  }
  return dx;
}

Tensor ConvMapWeightGrad(const Conv2d& layer, const Tensor& x, const Tensor& out_grad) {
  const Index batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index k = layer.kernel;
  const Index positions = out_grad.dim(2) * out_grad.dim(3);
  Tensor dw(layer.weight.shape());
  auto dwm = dw.matrix(layer.out_channels, c * k * k);
  for (Index b = 0; b < batch; ++b) {
    const Matrix cols = Im2Col(x.data() + b * c * h * w, c, h, w, k);
    Eigen::Map<const Matrix> g(out_grad.data() + b * layer.out_channels * positions,
                               layer.out_channels, positions);
    dwm.noalias() += g * cols.transpose();
  }
  return dw;
}

Tensor Forward(const Linear& layer, const Tensor& x) {
  Tensor out = LinearMap(layer, x);
  if (layer.has_bias()) out.matrix().rowwise() += layer.bias.vec().transpose();
  return out;
}

Tensor Forward(const Conv2d& layer, const Tensor& x) {
  Tensor out = ConvMap(layer, x);
  if (layer.has_bias()) {
    const Index batch = out.dim(0), positions = out.dim(2) * out.dim(3);
    auto m = out.matrix(batch * layer.out_channels, positions);
    for (Index r = 0; r < m.rows(); ++r) {
      m.row(r).array() += layer.bias[r % layer.out_channels];
    }
  }
  return out;
}

Tensor Forward(const Relu&, const Tensor& x) {
  Tensor out = x;
  out.vec() = x.vec().cwiseMax(0.0);
  return out;
}

Tensor Forward(const Standardize& layer, const Tensor& x) {
  Tensor out = x;
  const Index n = x.dim(0), d = x.size() / n;
  auto m = out.matrix(n, d);
  for (Index r = 0; r < n; ++r) {
    m.row(r).array() -= m.row(r).mean();
    m.row(r) /= std::sqrt(m.row(r).squaredNorm() / static_cast<double>(d) + layer.epsilon);
  }
  return out;
}

Tensor Forward(const Flatten& layer, const Tensor& x) {
  return x.Reshaped(OutputShape(layer, x.shape()));
}

Tensor Forward(const AvgPool2d& layer, const Tensor& x) {
  const Shape out_shape = OutputShape(layer, x.shape());
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = out_shape[2], ow = out_shape[3], win = layer.window;
  const double scale = 1.0 / static_cast<double>(win * win);
  Tensor out(out_shape);
  for (Index p = 0; p < planes; ++p) {
    Eigen::Map<const Matrix> src(x.data() + p * h * w, h, w);
    Eigen::Map<Matrix> dst(out.data() + p * oh * ow, oh, ow);
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        dst(i, j) = src.block(i * win, j * win, win, win).sum() * scale;
      }
    }
  }
  return out;
}

Tensor Backward(const Linear& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads) {
  param_grads.push_back(LinearMapWeightGrad(layer, x, out_grad));
  if (layer.has_bias()) {
    Tensor db({layer.out_dim});
    db.vec() = out_grad.matrix().colwise().sum().transpose();
    param_grads.push_back(std::move(db));
  }
  return LinearMapInputGrad(layer, out_grad);
}

Tensor Backward(const Conv2d& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads) {
  param_grads.push_back(ConvMapWeightGrad(layer, x, out_grad));
  if (layer.has_bias()) {
    const Index batch = out_grad.dim(0);
    const Index positions = out_grad.dim(2) * out_grad.dim(3);
    const auto g = out_grad.matrix(batch * layer.out_channels, positions);
    Tensor db({layer.out_channels});
    for (Index r = 0; r < g.rows(); ++r) db[r % layer.out_channels] += g.row(r).sum();
    param_grads.push_back(std::move(db));
  }
  return ConvMapInputGrad(layer, out_grad, x.shape());
}

Tensor Backward(const Relu&, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>&) {
  Tensor dx = out_grad;
  dx.vec() = (x.vec().array() > 0.0).select(out_grad.vec(), 0.0);
  return dx;
}

Tensor Backward(const Standardize& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>&) {
  const Index n = x.dim(0), d = x.size() / n;
  const Tensor y = Forward(layer, x);
  Tensor dx(x.shape());
  const auto xm = x.matrix(n, d);
  const auto ym = y.matrix(n, d);
  const auto gm = out_grad.matrix(n, d);
  auto dm = dx.matrix(n, d);
  for (Index r = 0; r < n; ++r) {
    const double centered_sq = (xm.row(r).array() - xm.row(r).mean()).square().sum();
    const double inv_std =
        1.0 / std::sqrt(centered_sq / static_cast<double>(d) + layer.epsilon);
    const double mean_g = gm.row(r).mean();
    const double mean_gy = gm.row(r).dot(ym.row(r)) / static_cast<double>(d);
    dm.row(r) = inv_std * (gm.row(r).array() - mean_g - mean_gy * ym.row(r).array()).matrix();
  }
  return dx;
}

Tensor Backward(const Flatten&, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>&) {
  return out_grad.Reshaped(x.shape());
}

Tensor Backward(const AvgPool2d& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>&) {
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = out_grad.dim(2), ow = out_grad.dim(3), win = layer.window;
  const double scale = 1.0 / static_cast<double>(win * win);
  Tensor dx(x.shape());
  for (Index p = 0; p < planes; ++p) {
    Eigen::Map<const Matrix> g(out_grad.data() + p * oh * ow, oh, ow);
    Eigen::Map<Matrix> dst(dx.data() + p * h * w, h, w);
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        dst.block(i * win, j * win, win, win).array() = g(i, j) * scale;
      }
    }
  }
  return dx;
}

std::vector<Tensor*> Parameters(Linear& layer) {
  if (layer.has_bias()) return {&layer.weight, &layer.bias};
  return {&layer.weight};
}

std::vector<Tensor*> Parameters(Conv2d& layer) {
  if (layer.has_bias()) return {&layer.weight, &layer.bias};
  return {&layer.weight};
}

}  // namespace fedpass
