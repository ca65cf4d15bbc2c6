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


#include "fedpass/models.h"

#include "fedpass/errors.h"

namespace fedpass {
namespace {

Layer Slot(Linear base, const std::optional<PassportConfig>& passport, Rng& rng) {
  if (!passport) return base;
  PassportConfig cfg = *passport;
  cfg.shape.clear();
  return PassportLayer::Create(std::move(base), cfg, rng);
}

Layer Slot(Conv2d base, const std::optional<PassportConfig>& passport, Rng& rng) {
  if (!passport) return base;
  PassportConfig cfg = *passport;
  cfg.shape.clear();
  return PassportLayer::Create(std::move(base), cfg, rng);
}

}  // namespace

ArchSpec ArchSpec::Parse(const std::string& name, std::vector<Index> dims) {
  ArchSpec arch;
  if (name == "mlp") {
    arch.kind = Kind::kMlp;
  } else if (name == "lenet_lite") {
    arch.kind = Kind::kLenetLite;
  } else {
    throw InvalidArgument("unknown architecture '" + name + "'");
  }
  if (!dims.empty()) arch.mlp_dims = std::move(dims);
  if (arch.kind == Kind::kMlp && arch.mlp_dims.size() < 2) {
    throw InvalidArgument("mlp needs at least an input and an output width");
  }
  for (Index d : arch.mlp_dims) {
    if (d < 1) throw InvalidArgument("layer widths must be positive");
  }
  return arch;
}

Network BuildPassiveModel(const ArchSpec& arch, const Shape& sample_shape,
                          const std::optional<PassportConfig>& passport, Rng& rng) {
  // Autoencoders draw from their own stream so base weights do not depend on
  // whether the slots carry passports.
  Rng ae_rng(rng.NextU64());
  Network net;
  if (arch.kind == ArchSpec::Kind::kMlp) {
    const Index flat = NumElements(sample_shape);
    if (arch.mlp_dims.front() != flat) {
      throw ShapeError("mlp input width " + std::to_string(arch.mlp_dims.front()) +
                       " does not match " + std::to_string(flat) + " features per party");
    }
    net.layers.push_back(Flatten{});
    for (std::size_t i = 0; i + 1 < arch.mlp_dims.size(); ++i) {
      Linear l = Linear::Create(arch.mlp_dims[i], arch.mlp_dims[i + 1], rng);
      const bool last = i + 2 == arch.mlp_dims.size();
      net.layers.push_back(last ? Slot(std::move(l), passport, ae_rng) : Layer(std::move(l)));
      net.layers.push_back(Relu{});
    }
  } else {
    if (sample_shape.size() != 3) {
      throw ShapeError("lenet_lite expects [c x h x w] inputs, got " + ShapeString(sample_shape));
    }
    net.layers.push_back(Conv2d::Create(sample_shape[0], 4, 5, rng));
    net.layers.push_back(Relu{});
    net.layers.push_back(AvgPool2d{2});
    net.layers.push_back(Slot(Conv2d::Create(4, 8, 3, rng), passport, ae_rng));
    net.layers.push_back(Standardize{});
    net.layers.push_back(Relu{});
    net.layers.push_back(Flatten{});
    Shape in = sample_shape;
    in.insert(in.begin(), 1);
    const Shape conv_out = net.OutputShapeFor(in);
    net.layers.push_back(Linear::Create(conv_out[1], arch.fusion_dim(), rng));
    net.layers.push_back(Relu{});
  }
  return net;
}

Network BuildActiveModel(const ArchSpec& arch, int classes,
                         const std::optional<PassportConfig>& passport, Rng& rng) {
  Rng ae_rng(rng.NextU64());
  Network net;
  net.layers.push_back(Standardize{});
  net.layers.push_back(
      Slot(Linear::Create(arch.fusion_dim(), arch.head_hidden, rng), passport, ae_rng));
  net.layers.push_back(Standardize{});
  net.layers.push_back(Relu{});
  net.layers.push_back(Linear::Create(arch.head_hidden, classes, rng));
  return net;
}

Network ShadowSkeleton(const Network& net, Rng& rng) {
  Network shadow;
  for (const Layer& layer : net.layers) {
    if (const auto* l = std::get_if<Linear>(&layer)) {
      shadow.layers.push_back(Linear::Create(l->in_dim, l->out_dim, rng));
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      shadow.layers.push_back(Conv2d::Create(c->in_channels, c->out_channels, c->kernel, rng));
    } else if (const auto* p = std::get_if<PassportLayer>(&layer)) {
      if (const auto* pl = std::get_if<Linear>(&p->base)) {
        shadow.layers.push_back(Linear::Create(pl->in_dim, pl->out_dim, rng));
      } else {
        const Conv2d& pc = std::get<Conv2d>(p->base);
        shadow.layers.push_back(Conv2d::Create(pc.in_channels, pc.out_channels, pc.kernel, rng));
      }
    } else {
      shadow.layers.push_back(layer);
    }
  }
  return shadow;
}

}  // namespace fedpass
