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

#ifndef FEDPASS_NETWORK_H_
#define FEDPASS_NETWORK_H_

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fedpass/layers.h"
#include "fedpass/passport.h"
#include "fedpass/tensor.h"

namespace fedpass {

using Layer =
    std::variant<Linear, Conv2d, Relu, Flatten, AvgPool2d, Standardize, PassportLayer>;

std::string LayerName(const Layer& layer);

// Sequential stack of layers. Passport layers occupy "slots" and need a
// PassportBinding per slot at evaluation time.
struct Network {
  std::vector<Layer> layers;

  std::vector<std::size_t> passport_slots() const;
  Index parameter_count() const;
  // Checks that consecutive layers compose for a given input shape and
  // returns the output shape.
  Shape OutputShapeFor(const Shape& input) const;
};

// Passport bindings keyed by layer index.
using PassportBindings = std::map<std::size_t, PassportBinding>;

struct ActivationTrace {
  // activations[0] is the input; activations[i + 1] is the output of layer i.
  std::vector<Tensor> activations;
  std::map<std::size_t, PassportCache> passport;

  const Tensor& output() const { return activations.back(); }
};

struct Gradients {
  // Per layer, in the order Parameters() returns them.
  std::vector<std::vector<Tensor>> params;
  Tensor input;
  // d/ds_gamma and d/ds_beta per passport slot, one entry per bound key.
  std::map<std::size_t, std::vector<Tensor>> passport_gamma;
  std::map<std::size_t, std::vector<Tensor>> passport_beta;
  // d/dgamma, d/dbeta for slots evaluated with a fixed scale/bias.
  std::map<std::size_t, ScaleBias> passport_fixed;
};

// Evaluates every layer, recording intermediate activations. Throws
// ShapeError naming the failing layer index.
ActivationTrace Forward(const Network& net, const Tensor& x,
                        const PassportBindings& bindings = {});

// Convenience wrapper returning only the output.
Tensor Predict(const Network& net, const Tensor& x, const PassportBindings& bindings = {});

Gradients Backward(const Network& net, const ActivationTrace& trace, const Tensor& out_grad);

std::vector<Tensor*> Parameters(Network& net);
std::vector<std::vector<Tensor*>> LayerParameters(Network& net);

// theta <- theta - lr * (g + weight_decay * theta), in place.
void SgdStep(Network& net, const Gradients& grads, double lr, double weight_decay);

struct SgdOptions {
  double lr = 1e-2;
  double weight_decay = 4e-5;
  double momentum = 0.0;
  // Rescales the network's gradient to this global L2 norm when it is
  // larger; 0 disables clipping.
  double clip_norm = 0.0;

  void Validate() const;
};

// Velocity buffers, created on the first step.
struct SgdState {
  std::vector<std::vector<Tensor>> velocity;
};

// Heavy-ball SGD: v <- momentum * v + (g' + weight_decay * theta);
// theta <- theta - lr * v, where g' is g after optional clipping. With
// momentum 0 and no clipping this equals the plain step above.
void SgdStep(Network& net, const Gradients& grads, const SgdOptions& options, SgdState& state);

// Largest absolute parameter difference between two identically shaped nets.
double MaxParameterDiff(Network& a, Network& b);

}  // namespace fedpass

#endif  // FEDPASS_NETWORK_H_
