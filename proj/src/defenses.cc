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


#include "fedpass/defenses.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedpass/errors.h"

namespace fedpass {
namespace {

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

[[noreturn]] void ThrowOutOfScope(const OutOfScopeDefense& d) {
  throw InvalidArgument(d.name + " defense is out of scope");
}

Tensor Sparsify(const Tensor& t, double keep_ratio) {
  const Index n = t.size();
  const Index k = std::min<Index>(n, static_cast<Index>(std::ceil(keep_ratio * n)));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const auto by_magnitude = [&](Index a, Index b) {
    const double ma = std::abs(t[a]), mb = std::abs(t[b]);
    return ma != mb ? ma > mb : a < b;
  };
  std::nth_element(order.begin(), order.begin() + k, order.end(), by_magnitude);
  Tensor out(t.shape());
  for (Index i = 0; i < k; ++i) out[order[i]] = t[order[i]];
  return out;
}

}  // namespace

std::string DefenseName(const DefenseSpec& spec) {
  return std::visit(Overloaded{[](const NoDefense&) { return std::string("none"); },
                               [](const FedPassDefense&) { return std::string("fedpass"); },
                               [](const GaussianNoiseDefense&) {
                                 return std::string("gaussian_noise");
                               },
                               [](const SparsifyDefense&) { return std::string("sparsify"); },
                               [](const OutOfScopeDefense& d) { return d.name; }},
                    spec);
}

double DefenseStrength(const DefenseSpec& spec) {
  return std::visit(Overloaded{[](const NoDefense&) { return 0.0; },
                               [](const FedPassDefense& d) { return d.range; },
                               [](const GaussianNoiseDefense& d) { return d.noise_level; },
                               [](const SparsifyDefense& d) { return d.keep_ratio; },
                               [](const OutOfScopeDefense&) { return 0.0; }},
                    spec);
}

void ValidateDefense(const DefenseSpec& spec) {
  std::visit(Overloaded{[](const NoDefense&) {},
                        [](const FedPassDefense& d) {
                          if (!(d.range > 0)) throw InvalidArgument("fedpass: N must be > 0");
                          if (!(d.sigma2 >= 0)) {
                            throw InvalidArgument("fedpass: sigma2 must be >= 0");
                          }
                        },
                        [](const GaussianNoiseDefense& d) {
                          if (!(d.noise_level >= 0)) {
                            throw InvalidArgument("gaussian_noise: noise level must be >= 0");
                          }
                        },
                        [](const SparsifyDefense& d) {
                          if (!(d.keep_ratio > 0 && d.keep_ratio <= 1)) {
                            throw InvalidArgument("sparsify: keep ratio must be in (0, 1]");
                          }
                        },
                        [](const OutOfScopeDefense& d) { ThrowOutOfScope(d); }},
             spec);
}

bool ActsOn(const DefenseSpec& spec, DefenseTarget target) {
  if (const auto* g = std::get_if<GaussianNoiseDefense>(&spec)) return g->target == target;
  if (const auto* s = std::get_if<SparsifyDefense>(&spec)) return s->target == target;
  return false;
}

Tensor ApplyTensorDefense(const Tensor& t, const DefenseSpec& spec, Rng& rng) {
  return std::visit(Overloaded{[&](const GaussianNoiseDefense& d) {
                                 if (d.noise_level == 0.0) return t;
                                 Tensor out = t;
                                 for (double& v : out.values()) v += rng.Normal(0.0, d.noise_level);
                                 return out;
                               },
                               [&](const SparsifyDefense& d) {
                                 ValidateDefense(spec);
                                 return Sparsify(t, d.keep_ratio);
                               },
                               [&](const OutOfScopeDefense& d) -> Tensor { ThrowOutOfScope(d); },
                               [&](const auto&) { return t; }},
                    spec);
}

std::vector<DefenseSpec> DefenseGrid(const DefenseSpec& base, std::span<const double> strengths) {
  if (strengths.empty()) throw InvalidArgument("defense grid needs at least one strength");
  if (!std::is_sorted(strengths.begin(), strengths.end())) {
    throw InvalidArgument("defense grid strengths must be ascending");
  }
  std::vector<DefenseSpec> grid;
  grid.reserve(strengths.size());
  for (double s : strengths) {
    DefenseSpec spec = base;
    std::visit(Overloaded{[&](FedPassDefense& d) { d.range = s; },
                          [&](GaussianNoiseDefense& d) { d.noise_level = s; },
                          [&](SparsifyDefense& d) { d.keep_ratio = s; },
                          [&](OutOfScopeDefense& d) { ThrowOutOfScope(d); },
                          [](NoDefense&) {}},
               spec);
    grid.push_back(std::move(spec));
  }
  return grid;
}

DefenseSpec MakeDefense(const std::string& name, double strength, DefenseTarget target,
                        double fedpass_sigma2) {
  if (name == "none") return NoDefense{};
  if (name == "fedpass") return FedPassDefense{strength, fedpass_sigma2, PassportScope::kPerBatch};
  if (name == "gaussian_noise") return GaussianNoiseDefense{strength, target};
  if (name == "sparsify") return SparsifyDefense{strength, target};
  if (name == "cae" || name == "instahide") return OutOfScopeDefense{name};
  throw InvalidArgument("unknown defense '" + name + "'");
}

std::string TargetName(DefenseTarget target) {
  return target == DefenseTarget::kEmbeddings ? "embeddings" : "gradients";
}

DefenseTarget ParseTarget(const std::string& name) {
  if (name == "embeddings") return DefenseTarget::kEmbeddings;
  if (name == "gradients") return DefenseTarget::kGradients;
  throw InvalidArgument("unknown defense target '" + name + "'");
}

}  // namespace fedpass
