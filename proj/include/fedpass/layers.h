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

// Primitive layers with analytic forward and reverse-mode passes. All tensors
// carry the batch on their leading axis.

#ifndef FEDPASS_LAYERS_H_
#define FEDPASS_LAYERS_H_

#include <vector>

#include "fedpass/random.h"
#include "fedpass/tensor.h"

namespace fedpass {

// y = x W^T + b, x is [batch x in_dim], W is [out_dim x in_dim].
struct Linear {
  Index in_dim = 0;
  Index out_dim = 0;
  Tensor weight;
  Tensor bias;  // Empty when the layer has no bias.

  bool has_bias() const { return !bias.empty(); }

  // Glorot-uniform weights, zero bias.
  static Linear Create(Index in_dim, Index out_dim, Rng& rng, bool with_bias = true);
};

// Square-kernel 2-D convolution, stride 1, no padding. Input [B x C x H x W],
// weight [out x in x k x k].
struct Conv2d {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 0;
  Tensor weight;
  Tensor bias;

  bool has_bias() const { return !bias.empty(); }

  static Conv2d Create(Index in_channels, Index out_channels, Index kernel, Rng& rng,
                       bool with_bias = true);
};

struct Relu {};

// [B x d1 x d2 ...] -> [B x (d1*d2*...)].
struct Flatten {};

// Non-overlapping mean pooling over `window` x `window` blocks; trailing rows
// and columns that do not fill a block are dropped.
struct AvgPool2d {
  Index window = 2;
};

// Per-sample standardization over all non-batch features, no learned affine:
// y = (x - mean) / sqrt(var + epsilon).
struct Standardize {
  double epsilon = 1e-5;
};

// Shape inference; throws ShapeError on incompatible input.
Shape OutputShape(const Linear& layer, const Shape& in);
Shape OutputShape(const Conv2d& layer, const Shape& in);
Shape OutputShape(const Relu& layer, const Shape& in);
Shape OutputShape(const Flatten& layer, const Shape& in);
Shape OutputShape(const AvgPool2d& layer, const Shape& in);
Shape OutputShape(const Standardize& layer, const Shape& in);

// Bias-free linear maps. These are the W-only pieces shared with passport
// layers, which apply W to both inputs and passports.
Tensor LinearMap(const Linear& layer, const Tensor& x);
Tensor LinearMapInputGrad(const Linear& layer, const Tensor& out_grad);
// Returns d/dW of sum(out_grad * (x W^T)), i.e. out_grad^T x.
Tensor LinearMapWeightGrad(const Linear& layer, const Tensor& x, const Tensor& out_grad);

Tensor ConvMap(const Conv2d& layer, const Tensor& x);
Tensor ConvMapInputGrad(const Conv2d& layer, const Tensor& out_grad, const Shape& in_shape);
Tensor ConvMapWeightGrad(const Conv2d& layer, const Tensor& x, const Tensor& out_grad);

Tensor Forward(const Linear& layer, const Tensor& x);
Tensor Forward(const Conv2d& layer, const Tensor& x);
Tensor Forward(const Relu& layer, const Tensor& x);
Tensor Forward(const Flatten& layer, const Tensor& x);
Tensor Forward(const AvgPool2d& layer, const Tensor& x);
Tensor Forward(const Standardize& layer, const Tensor& x);

// Each Backward appends the parameter gradients (weight, then bias if present)
// to `param_grads` and returns the gradient with respect to `x`.
Tensor Backward(const Linear& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads);
Tensor Backward(const Conv2d& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads);
Tensor Backward(const Relu& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads);
Tensor Backward(const Flatten& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads);
Tensor Backward(const AvgPool2d& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads);
Tensor Backward(const Standardize& layer, const Tensor& x, const Tensor& out_grad,
                std::vector<Tensor>& param_grads);

std::vector<Tensor*> Parameters(Linear& layer);
std::vector<Tensor*> Parameters(Conv2d& layer);
inline std::vector<Tensor*> Parameters(Relu&) { return {}; }
inline std::vector<Tensor*> Parameters(Flatten&) { return {}; }
inline std::vector<Tensor*> Parameters(AvgPool2d&) { return {}; }
inline std::vector<Tensor*> Parameters(Standardize&) { return {}; }

}  // namespace fedpass

#endif  // FEDPASS_LAYERS_H_
