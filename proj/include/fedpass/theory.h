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


// Numerical checks of the privacy analysis on the two-party linear model
//
//   passive:  H = diag(W_p s_gamma^p) W_p x + W_p s_beta^p
//   active:   y = diag(W_a s_gamma^a) W_a H + W_a s_beta^a
//
// Vectors and matrices are plain Eigen dense types.

#ifndef FEDPASS_THEORY_H_
#define FEDPASS_THEORY_H_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "fedpass/random.h"

namespace fedpass {

// Which passports the passive rule applies. The single-site forms are the
// instances the closed-form reconstruction results hold for.
enum class PassportSite { kBoth, kBetaOnly, kGammaOnly };

struct LinearInstance {
  Eigen::MatrixXd w_p;  // [hidden x input]
  Eigen::MatrixXd w_a;  // [output x hidden]; may be empty
  Eigen::VectorXd s_gamma_p, s_beta_p;  // [input]
  Eigen::VectorXd s_gamma_a, s_beta_a;  // [hidden]
  Eigen::VectorXd x;                    // [input]
  PassportSite site = PassportSite::kBoth;

  Eigen::VectorXd d_gamma() const { return w_p * s_gamma_p; }  // Diagonal of D_gamma.
  Eigen::VectorXd d_beta() const { return w_p * s_beta_p; }
  // Throws ShapeError when dimensions do not compose.
  void Validate() const;
};

struct LinearOutputs {
  Eigen::VectorXd h;
  Eigen::VectorXd y;  // Empty when the instance has no active part.
};

LinearOutputs LinearForward(const LinearInstance& inst, const Eigen::VectorXd& x);

// Reconstruction error of a key-guessing attacker next to what the closed form
// predicts: equality for the bias site, a lower bound for the scale site.
struct GuessCheck {
  double actual = 0.0;
  double predicted = 0.0;
};

// Bias site: x_hat = W_p^+ (H - W_p s'), predicted = |s_beta - s'|.
// Requires W_p with independent columns.
GuessCheck BetaGuessCheck(const LinearInstance& inst, const Eigen::VectorXd& s_beta_guess);

// Scale site: x_hat = W_p^-1 D'^-1 H, bound = |(D^-1 - D'^-1) H| / |W_p|_2.
// Requires square invertible W_p and no zero entries in either diagonal.
GuessCheck GammaGuessCheck(const LinearInstance& inst, const Eigen::VectorXd& s_gamma_guess);

// Lanczos approximation (g = 7, 9 coefficients) of log Gamma for z > 0.
double LogGamma(double z);
double Gamma(double z);

// pi^(m/2) eps^m / (Gamma(1 + m/2) N^m): the chance that a uniform guess over
// (-N, 0)^m lands within eps of the true bias passport.
double RecoveryBound(int m, double eps, double range);

// Fraction of uniform guesses s' in (-N, 0)^m whose bias-site reconstruction
// lies within eps of x. Requires at least 1000 trials.
double RecoveryMonteCarlo(const LinearInstance& inst, double eps, double range, int trials,
                          Rng& rng);

struct LabelRecoveryInstance {
  Eigen::MatrixXd w_a;                  // [output x hidden]
  std::vector<Eigen::VectorXd> h;       // H_i
  std::vector<Eigen::VectorXd> s_gamma; // s_{gamma,i}^a
  std::vector<Eigen::VectorXd> y;       // T_i H_i

  std::size_t size() const { return h.size(); }
  Eigen::MatrixXd T(std::size_t i) const;
  bool identical_h() const;
};

// Fills y_i = T_i H_i.
LabelRecoveryInstance MakeLabelRecoveryInstance(Eigen::MatrixXd w_a,
                                                std::vector<Eigen::VectorXd> h,
                                                std::vector<Eigen::VectorXd> s_gamma);

struct LabelBoundResult {
  // min over W of sum_i |(W - T_i) H_i|_2, as attained by the returned W.
  double oracle_min_error = 0.0;
  // A dual-feasible value: a certified lower bound on the true minimum.
  double certified_lower = 0.0;
  // (1 / (n - 1)) sum_{i<j} |(T_i - T_j) H|_2; NaN unless all H_i are equal.
  double pairwise_bound = 0.0;
  Eigen::MatrixXd w_att;
  int iterations = 0;

  double gap() const { return oracle_min_error - certified_lower; }
};

// Minimizes the non-smooth attack loss by iteratively reweighted least squares
// and certifies the result with a dual point built from the final residual
// directions (a subgradient-stationarity witness). Stops when the duality gap
// falls below tol * max(1, primal).
LabelBoundResult LabelBoundCheck(const LabelRecoveryInstance& inst, double tol = 1e-10,
                             int max_iterations = 20000);

// (1 / (n - 1)) sum over unordered pairs of |s_i - s_j|_2; needs n >= 2.
double IdentityCaseBound(std::span<const Eigen::VectorXd> passports);

// Random instance with N(0, 1) weights (rejecting condition numbers above
// 1e6) and passports drawn with per-element means in (-N, 0) and variance
// sigma2. Gamma-site instances use a square W_p.
LinearInstance RandomLinearInstance(int input_dim, int hidden_dim, int output_dim,
                                    PassportSite site, double range, double sigma2, Rng& rng);

}  // namespace fedpass

#endif  // FEDPASS_THEORY_H_
