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

#include "fedpass/network.h"

#include <cmath>

namespace fedpass {
namespace {

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

std::string LayerName(const Layer& layer) {
  return std::visit(
      Overloaded{[](const Linear&) { return std::string("Linear"); },
                 [](const Conv2d&) { return std::string("Conv2d"); },
                 [](const Relu&) { return std::string("ReLU"); },
                 [](const Flatten&) { return std::string("Flatten"); },
                 [](const AvgPool2d&) { return std::string("AvgPool2d"); },
                 [](const Standardize&) { return std::string("Standardize"); },
                 [](const PassportLayer& p) {
                   return std::string(p.is_conv() ? "Passport(Conv2d)" : "Passport(Linear)");
                 }},
      layer);
}

std::vector<std::size_t> Network::passport_slots() const {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<PassportLayer>(layers[i])) slots.push_back(i);
  }
  return slots;
}

Index Network::parameter_count() const {
  Index count = 0;
  Network& self = const_cast<Network&>(*this);
  for (Tensor* p : Parameters(self)) count += p->size();
  return count;
}

Shape Network::OutputShapeFor(const Shape& input) const {
  Shape shape = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      shape = std::visit([&](const auto& l) { return OutputShape(l, shape); }, layers[i]);
    } catch (const ShapeError& e) {
      throw ShapeError(e.what(), i);
    }
  }
  return shape;
}

ActivationTrace Forward(const Network& net, const Tensor& x,
                        const PassportBindings& bindings) {
  ActivationTrace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(x);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Tensor& in = trace.activations.back();
    try {
      Tensor out = std::visit(
          Overloaded{[&](const PassportLayer& p) {
                       auto it = bindings.find(i);
                       if (it == bindings.end()) {
                         throw InvalidArgument("no passport binding for slot");
                       }
                       OutputShape(p, in.shape());
                       return PassportForward(p, in, it->second, &trace.passport[i]);
                     },
                     [&](const auto& l) {
                       OutputShape(l, in.shape());
                       return Forward(l, in);
                     }},
          net.layers[i]);
      trace.activations.push_back(std::move(out));
    } catch (const ShapeError& e) {
      if (e.layer_index()) throw;
      throw ShapeError(e.what(), i);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return trace;
}

Tensor Predict(const Network& net, const Tensor& x, const PassportBindings& bindings) {
  return Forward(net, x, bindings).output();
}

Gradients Backward(const Network& net, const ActivationTrace& trace, const Tensor& out_grad) {
  if (trace.activations.size() != net.layers.size() + 1) {
    throw ShapeError("trace has " + std::to_string(trace.activations.size()) +
                     " activations for " + std::to_string(net.layers.size()) + " layers");
  }
  if (out_grad.shape() != trace.output().shape()) {
    throw ShapeError("out_grad " + ShapeString(out_grad.shape()) + " vs output " +
                     ShapeString(trace.output().shape()));
  }
  Gradients grads;
  grads.params.resize(net.layers.size());
  Tensor g = out_grad;
  for (std::size_t idx = net.layers.size(); idx-- > 0;) {
    const Tensor& in = trace.activations[idx];
    try {
      g = std::visit(
          Overloaded{[&](const PassportLayer& p) {
                       auto it = trace.passport.find(idx);
                       if (it == trace.passport.end()) {
                         throw ShapeError("missing passport cache in trace");
                       }
                       PassportGradients pg = PassportBackward(p, it->second, g);
                       grads.params[idx] = {std::move(pg.weight), std::move(pg.encoder_weight),
                                            std::move(pg.encoder_bias),
                                            std::move(pg.decoder_weight),
                                            std::move(pg.decoder_bias)};
                       grads.passport_gamma[idx] = std::move(pg.s_gamma);
                       grads.passport_beta[idx] = std::move(pg.s_beta);
                       if (pg.fixed) grads.passport_fixed[idx] = std::move(*pg.fixed);
                       return std::move(pg.input);
                     },
                     [&](const auto& l) { return Backward(l, in, g, grads.params[idx]); }},
          net.layers[idx]);
    } catch (const ShapeError& e) {
      if (e.layer_index()) throw;
      throw ShapeError(e.what(), idx);
    }
  }
  grads.input = std::move(g);
  return grads;
}

std::vector<std::vector<Tensor*>> LayerParameters(Network& net) {
  std::vector<std::vector<Tensor*>> out;
  out.reserve(net.layers.size());
  for (Layer& layer : net.layers) {
    out.push_back(std::visit([](auto& l) { return Parameters(l); }, layer));
  }
  return out;
}

std::vector<Tensor*> Parameters(Network& net) {
  std::vector<Tensor*> flat;
  for (auto& layer_params : LayerParameters(net)) {
    flat.insert(flat.end(), layer_params.begin(), layer_params.end());
  }
  return flat;
}

namespace {

std::vector<std::vector<Tensor*>> CheckedParameters(Network& net, const Gradients& grads) {
  auto params = LayerParameters(net);
  if (grads.params.size() != params.size()) {
    throw ShapeError("gradients cover " + std::to_string(grads.params.size()) +
                     " layers, network has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.params[i].size() != params[i].size()) {
      throw ShapeError("gradient count mismatch", i);
    }
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      if (grads.params[i][j].shape() != params[i][j]->shape()) {
        throw ShapeError("gradient shape " + ShapeString(grads.params[i][j].shape()) +
                             " vs parameter " + ShapeString(params[i][j]->shape()),
                         i);
      }
    }
  }
  return params;
}

}  // namespace

void SgdStep(Network& net, const Gradients& grads, double lr, double weight_decay) {
  auto params = CheckedParameters(net, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      Tensor& theta = *params[i][j];
      theta.vec() -= lr * (grads.params[i][j].vec() + weight_decay * theta.vec());
    }
  }
}

void SgdOptions::Validate() const {
  if (!(lr > 0)) throw InvalidArgument("learning rate must be > 0");
  if (!(weight_decay >= 0)) throw InvalidArgument("weight decay must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(clip_norm >= 0)) throw InvalidArgument("clip norm must be >= 0");
}

void SgdStep(Network& net, const Gradients& grads, const SgdOptions& options, SgdState& state) {
  auto params = CheckedParameters(net, grads);
  double scale = 1.0;
  if (options.clip_norm > 0) {
    double sq = 0.0;
    for (const auto& layer : grads.params) {
      for (const Tensor& g : layer) sq += g.vec().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > options.clip_norm) scale = options.clip_norm / norm;
  }
  if (state.velocity.empty()) {
    for (const auto& layer : params) {
      state.velocity.emplace_back();
      for (const Tensor* p : layer) state.velocity.back().emplace_back(p->shape());
    }
  }
  if (state.velocity.size() != params.size()) throw ShapeError("optimizer state does not match");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      Tensor& theta = *params[i][j];
      Tensor& v = state.velocity[i][j];
      v.vec() = options.momentum * v.vec() + scale * grads.params[i][j].vec() +
                options.weight_decay * theta.vec();
      theta.vec() -= options.lr * v.vec();
    }
  }
}

double MaxParameterDiff(Network& a, Network& b) {
  const auto pa = Parameters(a);
  const auto pb = Parameters(b);
  if (pa.size() != pb.size()) throw ShapeError("networks differ in parameter count");
  double diff = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) diff = std::max(diff, MaxAbsDiff(*pa[i], *pb[i]));
  return diff;
}

}  // namespace fedpass
