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

// Semi-honest privacy attacks on a trained split model: white-box feature
// inversion (CAFE), black-box model inversion through a shadow model (MI) and
// passive model completion for label inference (PMC).
//
// Attacks see only a PublicModel (weights and passport layer structure, no
// keys) and tensors that crossed the party boundary.

#ifndef FEDPASS_ATTACKS_H_
#define FEDPASS_ATTACKS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedpass/network.h"
#include "fedpass/protocol.h"
#include "fedpass/tensor.h"

namespace fedpass {

struct AttackConfig {
  int iterations = 2000;
  double step_size = 0.1;  // First trial step; later steps are adaptive.
  double tv_lambda = 0.1;
  int restarts = 3;
  std::uint64_t seed = 0;
  double init_stddev = 0.1;
  // CAFE: also fit the per-channel scale/bias guesses, starting from neutral.
  bool optimize_passports = false;
  int shadow_iterations = 500;
  int pmc_iterations = 1000;

  void Validate() const;
};

// ---- Optimizer shared by every attack ----

// Returns f(x) and writes the gradient into `grad` when non-null.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct DescentResult {
  Vector x;
  double loss = 0.0;
  std::vector<double> trace;  // Loss at the start and after every accepted step.
  bool finite = true;         // False when the starting loss was not finite.
};

// Gradient descent with a backtracking line search: the trial step is the
// Barzilai-Borwein step (first: `step_size`) and is halved until the loss does
// not increase, so `trace` is non-increasing. Stops after `iterations`
// gradient evaluations or when no decreasing step exists.
DescentResult BacktrackingDescent(const Objective& f, Vector x0, int iterations,
                                  double step_size);

// ---- Total variation ----

struct TvValue {
  double value = 0.0;
  Tensor grad;
};

// Squared anisotropic total variation of a batch. Rank 1: one vector. Rank 2:
// each row is a vector. Rank >= 3: the last two axes are spatial and TV sums
// over every plane.
TvValue TotalVariation(const Tensor& x);

// ---- Feature inversion ----

struct InversionResult {
  Tensor x_hat;  // [batch x input_shape]
  double loss = 0.0;
  std::vector<double> trace;  // Of the best restart.
  int failed_restarts = 0;
  // Final scale/bias guesses when they were optimized.
  std::map<std::size_t, ScaleBias> fitted_passports;
};

// Neutral scale 1 and bias 0 at every passport slot: the guess of an attacker
// who does not know the layer is obfuscated.
PassportBindings NeutralGuess(const Network& net);

// argmin_x ||G(x) - target_h||^2 + lambda TV(x), best of `restarts` random
// starts. `guess` replaces the unknown keys (default: NeutralGuess). Throws
// NumericalError when every restart hits a non-finite loss.
InversionResult CafeInvert(const PublicModel& model, const Tensor& target_h,
                           const AttackConfig& cfg,
                           const std::optional<PassportBindings>& guess = std::nullopt);

struct ShadowFit {
  Network model;
  double residual = 0.0;  // Mean squared fit error on the probe pairs.
};

// Least-squares regression of `skeleton` on (probe_x, probe_h) by full-batch
// descent. Throws InvalidArgument on zero pairs and NumericalError on
// divergence.
ShadowFit FitShadow(Network skeleton, const Tensor& probe_x, const Tensor& probe_h,
                    const AttackConfig& cfg);

struct MiResult {
  ShadowFit shadow;
  InversionResult inversion;
};

// Fits a shadow of the passive model on probe queries, then inverts it.
MiResult MiBlackbox(Network skeleton, const Tensor& probe_x, const Tensor& probe_h,
                    const Tensor& target_h, const AttackConfig& cfg);

// ---- Label inference ----

enum class PmcHead { kSoftmax, kLeastSquares };

struct PmcModel {
  Matrix w;    // [classes x features]
  Vector b;    // [classes]; zero for least squares
  PmcHead head = PmcHead::kSoftmax;
  double train_loss = 0.0;

  std::vector<int> Predict(const Tensor& h) const;
};

// Fits the attack head on auxiliary (H_i, y_i). The softmax head minimizes
// mean cross-entropy with a bias; the least-squares head minimizes
// sum_i |W H_i - onehot(y_i)|^2 without one.
PmcModel FitPmc(const Tensor& aux_h, std::span<const int> aux_y, int classes,
                const AttackConfig& cfg, PmcHead head = PmcHead::kSoftmax);

struct PmcResult {
  PmcModel model;
  std::vector<int> predictions;
  double label_error = 0.0;  // Fraction of wrong predictions.
};

PmcResult PmcAttack(const Tensor& aux_h, std::span<const int> aux_y, const Tensor& test_h,
                    std::span<const int> test_y, int classes, const AttackConfig& cfg,
                    PmcHead head = PmcHead::kSoftmax);

// ---- Reporting ----

struct AttackReport {
  std::string attack;               // "cafe", "mi" or "pmc"
  std::vector<double> per_sample;   // MSE per record, or 1/0 correctness for PMC
  double aggregate = 0.0;           // Mean of per_sample.
};

// Per-record MSE between x and x_hat (leading axis is the batch).
AttackReport FeatureReport(std::string attack, const Tensor& x, const Tensor& x_hat);
// Per-record correctness of PMC predictions; aggregate is label accuracy.
AttackReport LabelReport(std::span<const int> pred, std::span<const int> truth);

}  // namespace fedpass

#endif  // FEDPASS_ATTACKS_H_
