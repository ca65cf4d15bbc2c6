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


// Baseline protections applied where messages cross the party boundary, and
// the FedPass selector that turns on passport layers instead.

#ifndef FEDPASS_DEFENSES_H_
#define FEDPASS_DEFENSES_H_

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedpass/passport.h"
#include "fedpass/random.h"
#include "fedpass/tensor.h"

namespace fedpass {

// Which protocol message a baseline perturbs.
enum class DefenseTarget { kEmbeddings, kGradients };

struct NoDefense {};

struct FedPassDefense {
  double range = 50.0;  // N
  double sigma2 = 1.0;
  PassportScope scope = PassportScope::kPerBatch;
};

struct GaussianNoiseDefense {
  double noise_level = 0.0;  // Standard deviation of the added noise.
  DefenseTarget target = DefenseTarget::kEmbeddings;
};

struct SparsifyDefense {
  double keep_ratio = 1.0;
  DefenseTarget target = DefenseTarget::kGradients;
};

// Placeholders for baselines that are recognized by name but not built
// (autoencoder-based label confusion and InstaHide). Using one throws.
struct OutOfScopeDefense {
  std::string name;
};

using DefenseSpec = std::variant<NoDefense, FedPassDefense, GaussianNoiseDefense,
                                 SparsifyDefense, OutOfScopeDefense>;

std::string DefenseName(const DefenseSpec& spec);

// The swept strength: N for FedPass, the noise level, the keep ratio; 0 for
// no defense.
double DefenseStrength(const DefenseSpec& spec);

// Throws InvalidArgument for malformed parameters and for out-of-scope
// variants.
void ValidateDefense(const DefenseSpec& spec);

// Whether `spec` perturbs messages at `target`.
bool ActsOn(const DefenseSpec& spec, DefenseTarget target);

// GaussianNoise adds i.i.d. Normal(0, noise_level^2); Sparsify keeps the
// ceil(keep_ratio * n) largest magnitudes (ties keep the lower flat index) and
// zeroes the rest. Other variants return `t` unchanged.
Tensor ApplyTensorDefense(const Tensor& t, const DefenseSpec& spec, Rng& rng);

// One spec per strength, copying every other field from `base`. Strengths
// must be non-empty and ascending.
std::vector<DefenseSpec> DefenseGrid(const DefenseSpec& base, std::span<const double> strengths);

// Builds a spec from a variant name ("none", "fedpass", "gaussian_noise",
// "sparsify", "cae", "instahide") and a strength.
DefenseSpec MakeDefense(const std::string& name, double strength,
                        DefenseTarget target = DefenseTarget::kEmbeddings,
                        double fedpass_sigma2 = 1.0);

std::string TargetName(DefenseTarget target);
DefenseTarget ParseTarget(const std::string& name);

}  // namespace fedpass

#endif  // FEDPASS_DEFENSES_H_
