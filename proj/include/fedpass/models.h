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


// Bottom (passive) and top (active) model builders used by the runner.
//
//   mlp        passive: Flatten, then Linear + ReLU per consecutive pair of
//              `mlp_dims`; the last Linear is the passport slot.
//   lenet_lite passive: Conv(c->4, 5), ReLU, AvgPool(2), Conv(4->8, 3)
//              [passport], Standardize, ReLU, Flatten, Linear(-> fusion), ReLU.
//   active     Standardize, Linear(fusion -> head_hidden) [passport],
//              Standardize, ReLU, Linear(head_hidden -> classes).
//
// A passport slot scales its output by ~N, so every slot output is
// standardized before it reaches another trainable layer. The passive mlp
// sends its slot output as is; the active model standardizes the fused
// embedding on arrival.

#ifndef FEDPASS_MODELS_H_
#define FEDPASS_MODELS_H_

#include <optional>
#include <string>
#include <vector>

#include "fedpass/network.h"
#include "fedpass/passport.h"
#include "fedpass/random.h"

namespace fedpass {

struct ArchSpec {
  enum class Kind { kMlp, kLenetLite };
  Kind kind = Kind::kMlp;
  // Input width first, fusion width last. For lenet_lite only the last entry
  // (the fusion width) is used.
  std::vector<Index> mlp_dims{392, 128, 64};
  // Width of the active model's first (passport) layer; a plain linear layer
  // maps it to the class scores.
  Index head_hidden = 32;

  Index fusion_dim() const { return mlp_dims.back(); }
  static ArchSpec Parse(const std::string& name, std::vector<Index> dims);
  std::string name() const { return kind == Kind::kMlp ? "mlp" : "lenet_lite"; }
};

// `passport` enables the passport slot with the given sampling law. The
// Standardize layers are present whether or not a slot carries a passport, so
// all defenses share one architecture.
Network BuildPassiveModel(const ArchSpec& arch, const Shape& sample_shape,
                          const std::optional<PassportConfig>& passport, Rng& rng);
Network BuildActiveModel(const ArchSpec& arch, int classes,
                         const std::optional<PassportConfig>& passport, Rng& rng);

// Same skeleton with every passport slot replaced by its plain base layer
// (bias restored) and fresh weights: the black-box attacker's shadow.
Network ShadowSkeleton(const Network& net, Rng& rng);

}  // namespace fedpass

#endif  // FEDPASS_MODELS_H_
