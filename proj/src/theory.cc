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


#include "fedpass/theory.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fedpass/errors.h"
#include "fedpass/passport.h"

namespace fedpass {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void CheckSize(const VectorXd& v, Eigen::Index n, const char* name) {
  if (v.size() != n) {
    throw ShapeError(std::string(name) + " has " + std::to_string(v.size()) +
                     " entries, expected " + std::to_string(n));
  }
}

double ConditionNumber(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const VectorXd& s = svd.singularValues();
  return s.minCoeff() > 0 ? s.maxCoeff() / s.minCoeff() : std::numeric_limits<double>::infinity();
}

double SpectralNorm(const MatrixXd& m) {
  return Eigen::JacobiSVD<MatrixXd>(m).singularValues()(0);
}

// Sum of |W H_i - p_i| and the dual value -sum <lambda_i, p_i> for a
// lambda made feasible (sum lambda_i H_i^T = 0, |lambda_i| <= 1).
struct Evaluation {
  double primal = 0.0;
  double dual = -std::numeric_limits<double>::infinity();
};

Evaluation Evaluate(const MatrixXd& w, const MatrixXd& hs, const MatrixXd& ps,
                    const MatrixXd& row_space, double delta) {
  Evaluation e;
  MatrixXd lambda = w * hs - ps;
  for (Eigen::Index i = 0; i < lambda.cols(); ++i) {
    const double norm = lambda.col(i).norm();
    e.primal += norm;
    lambda.col(i) /= std::max(norm, delta);
  }
  lambda -= (lambda * row_space) * row_space.transpose();
  const double scale = std::max(1.0, lambda.colwise().norm().maxCoeff());
  e.dual = -(lambda.cwiseProduct(ps)).sum() / scale;
  return e;
}

}  // namespace

void LinearInstance::Validate() const {
  const Eigen::Index hidden = w_p.rows(), input = w_p.cols();
  if (hidden == 0 || input == 0) throw ShapeError("W_p is empty");
  if (site != PassportSite::kBetaOnly) CheckSize(s_gamma_p, input, "s_gamma^p");
  if (site != PassportSite::kGammaOnly) CheckSize(s_beta_p, input, "s_beta^p");
  if (x.size() != 0) CheckSize(x, input, "x");
  if (w_a.size() != 0) {
    if (w_a.cols() != hidden) throw ShapeError("W_a columns must equal W_p rows");
    if (s_gamma_a.size() != 0) CheckSize(s_gamma_a, hidden, "s_gamma^a");
    if (s_beta_a.size() != 0) CheckSize(s_beta_a, hidden, "s_beta^a");
  }
}

LinearOutputs LinearForward(const LinearInstance& inst, const VectorXd& x) {
  inst.Validate();
  CheckSize(x, inst.w_p.cols(), "x");
  LinearOutputs out;
  out.h = inst.w_p * x;
  if (inst.site != PassportSite::kBetaOnly) out.h = inst.d_gamma().cwiseProduct(out.h);
  if (inst.site != PassportSite::kGammaOnly) out.h += inst.d_beta();
  if (inst.w_a.size() != 0) {
    out.y = inst.w_a * out.h;
    if (inst.s_gamma_a.size() != 0) out.y = (inst.w_a * inst.s_gamma_a).cwiseProduct(out.y);
    if (inst.s_beta_a.size() != 0) out.y += inst.w_a * inst.s_beta_a;
  }
  return out;
}

GuessCheck BetaGuessCheck(const LinearInstance& inst, const VectorXd& s_beta_guess) {
  if (inst.site != PassportSite::kBetaOnly) {
    throw InvalidArgument("bias-site check needs a bias-only instance");
  }
  CheckSize(s_beta_guess, inst.w_p.cols(), "guessed s_beta");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(inst.w_p);
  if (qr.rank() < inst.w_p.cols()) throw NumericalError("W_p columns are linearly dependent");
  const VectorXd h = LinearForward(inst, inst.x).h;
  const VectorXd x_hat = qr.solve(h - inst.w_p * s_beta_guess);
  return {(inst.x - x_hat).norm(), (inst.s_beta_p - s_beta_guess).norm()};
}

GuessCheck GammaGuessCheck(const LinearInstance& inst, const VectorXd& s_gamma_guess) {
  if (inst.site != PassportSite::kGammaOnly) {
    throw InvalidArgument("scale-site check needs a scale-only instance");
  }
  if (inst.w_p.rows() != inst.w_p.cols()) throw ShapeError("scale-site check needs square W_p");
  CheckSize(s_gamma_guess, inst.w_p.cols(), "guessed s_gamma");
  Eigen::FullPivLU<MatrixXd> lu(inst.w_p);
  if (!lu.isInvertible()) throw NumericalError("W_p is singular");
  const VectorXd d = inst.d_gamma();
  const VectorXd d_guess = inst.w_p * s_gamma_guess;
  if ((d.array() == 0.0).any() || (d_guess.array() == 0.0).any()) {
    throw NumericalError("scale diagonal has a zero entry");
  }
  const VectorXd h = LinearForward(inst, inst.x).h;
  const VectorXd x_hat = lu.solve(h.cwiseQuotient(d_guess));
  const VectorXd gap = h.cwiseQuotient(d) - h.cwiseQuotient(d_guess);
  return {(inst.x - x_hat).norm(), gap.norm() / SpectralNorm(inst.w_p)};
}

double LogGamma(double z) {
  static constexpr double kG = 7.0;
  static constexpr double kCoeff[9] = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  if (!(z > 0)) throw InvalidArgument("log gamma needs z > 0");
  if (z < 0.5) {
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * z)) - LogGamma(1.0 - z);
  }
  z -= 1.0;
  double a = kCoeff[0];
  for (int i = 1; i < 9; ++i) a += kCoeff[i] / (z + i);
  const double t = z + kG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

double Gamma(double z) { return std::exp(LogGamma(z)); }

double RecoveryBound(int m, double eps, double range) {
  if (m < 1 || !(eps > 0) || !(range > 0)) {
    throw InvalidArgument("recovery bound needs m >= 1, eps > 0, N > 0");
  }
  const double md = m;
  return std::exp(0.5 * md * std::log(std::numbers::pi) + md * std::log(eps) -
                  LogGamma(1.0 + 0.5 * md) - md * std::log(range));
}

double RecoveryMonteCarlo(const LinearInstance& inst, double eps, double range, int trials,
                          Rng& rng) {
  if (trials < 1000) throw InvalidArgument("at least 1000 trials are needed");
  if (inst.site != PassportSite::kBetaOnly) {
    throw InvalidArgument("Monte Carlo check needs a bias-only instance");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(inst.w_p);
  if (qr.rank() < inst.w_p.cols()) throw NumericalError("W_p columns are linearly dependent");
  const VectorXd h = LinearForward(inst, inst.x).h;
  const Eigen::Index m = inst.w_p.cols();
  VectorXd guess(m);
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    for (Eigen::Index j = 0; j < m; ++j) guess(j) = rng.Uniform(-range, 0.0);
    const VectorXd x_hat = qr.solve(h - inst.w_p * guess);
    hits += (inst.x - x_hat).norm() <= eps;
  }
  return static_cast<double>(hits) / trials;
}

MatrixXd LabelRecoveryInstance::T(std::size_t i) const {
  return (w_a * s_gamma.at(i)).asDiagonal() * w_a;
}

bool LabelRecoveryInstance::identical_h() const {
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i] != h[0]) return false;
  }
  return true;
}

LabelRecoveryInstance MakeLabelRecoveryInstance(MatrixXd w_a, std::vector<VectorXd> h,
                                                std::vector<VectorXd> s_gamma) {
  if (h.size() != s_gamma.size()) throw ShapeError("need one passport per sample");
  LabelRecoveryInstance inst{std::move(w_a), std::move(h), std::move(s_gamma), {}};
  for (std::size_t i = 0; i < inst.size(); ++i) {
    CheckSize(inst.h[i], inst.w_a.cols(), "H_i");
    CheckSize(inst.s_gamma[i], inst.w_a.cols(), "s_gamma_i");
    inst.y.push_back(inst.T(i) * inst.h[i]);
  }
  return inst;
}

LabelBoundResult LabelBoundCheck(const LabelRecoveryInstance& inst, double tol, int max_iterations) {
  const std::size_t n = inst.size();
  if (n < 2) throw InvalidArgument("label recovery check needs at least two samples");
  const Eigen::Index hidden = inst.w_a.cols(), out = inst.w_a.rows();
  MatrixXd hs(hidden, static_cast<Eigen::Index>(n)), ps(out, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    hs.col(static_cast<Eigen::Index>(i)) = inst.h[i];
    ps.col(static_cast<Eigen::Index>(i)) = inst.T(i) * inst.h[i];
  }

  // Orthonormal basis of the row space of [H_1 ... H_n], used to project dual
  // candidates onto {lambda : sum lambda_i H_i^T = 0}.
  Eigen::JacobiSVD<MatrixXd> svd(hs, Eigen::ComputeThinV);
  const double cutoff = 1e-12 * std::max(1.0, svd.singularValues()(0));
  const Eigen::Index rank = (svd.singularValues().array() > cutoff).count();
  const MatrixXd row_space = svd.matrixV().leftCols(rank);

  const double scale = std::max(1.0, ps.colwise().norm().maxCoeff());
  double delta = 1e-3 * scale;
  VectorXd weights = VectorXd::Ones(static_cast<Eigen::Index>(n));
  LabelBoundResult result;
  result.oracle_min_error = std::numeric_limits<double>::infinity();
  result.certified_lower = -std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iterations; ++it) {
    result.iterations = it + 1;
    const MatrixXd gram = hs * weights.asDiagonal() * hs.transpose();
    const MatrixXd cross = ps * weights.asDiagonal() * hs.transpose();
    const MatrixXd w = gram.completeOrthogonalDecomposition().solve(cross.transpose()).transpose();
    const Evaluation e = Evaluate(w, hs, ps, row_space, delta);
    if (e.primal < result.oracle_min_error) {
      result.oracle_min_error = e.primal;
      result.w_att = w;
    }
    result.certified_lower = std::max(result.certified_lower, e.dual);
    if (result.gap() <= tol * std::max(1.0, result.oracle_min_error)) break;
    if (previous - e.primal < 1e-6 * delta) delta = std::max(delta * 0.1, 1e-15 * scale);
    previous = e.primal;
    const VectorXd norms = (w * hs - ps).colwise().norm().transpose();
    weights = norms.cwiseMax(delta).cwiseInverse();
  }

  if (inst.identical_h()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        sum += (ps.col(static_cast<Eigen::Index>(i)) - ps.col(static_cast<Eigen::Index>(j))).norm();
      }
    }
    result.pairwise_bound = sum / static_cast<double>(n - 1);
  } else {
    result.pairwise_bound = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

double IdentityCaseBound(std::span<const VectorXd> passports) {
  const std::size_t n = passports.size();
  if (n < 2) throw InvalidArgument("pairwise bound needs at least two passports");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      CheckSize(passports[j], passports[i].size(), "passport");
      sum += (passports[i] - passports[j]).norm();
    }
  }
  return sum / static_cast<double>(n - 1);
}

LinearInstance RandomLinearInstance(int input_dim, int hidden_dim, int output_dim,
                                    PassportSite site, double range, double sigma2, Rng& rng) {
  if (input_dim < 1 || hidden_dim < input_dim) {
    throw InvalidArgument("need 1 <= input_dim <= hidden_dim");
  }
  if (site == PassportSite::kGammaOnly && hidden_dim != input_dim) {
    throw InvalidArgument("scale-site instances need a square W_p");
  }
  auto normal = [&](int rows, int cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal(0.0, 1.0);
    return m;
  };
  LinearInstance inst;
  inst.site = site;
  do {
    inst.w_p = normal(hidden_dim, input_dim);
  } while (ConditionNumber(inst.w_p) > 1e6);
  PassportConfig cfg;
  cfg.range = range;
  cfg.sigma2 = sigma2;
  cfg.shape = {input_dim, 1};
  const PassportKey passive = SamplePassport(cfg, rng);
  inst.s_gamma_p = passive.s_gamma.vec();
  inst.s_beta_p = passive.s_beta.vec();
  if (site == PassportSite::kBetaOnly) inst.s_gamma_p.resize(0);
  if (site == PassportSite::kGammaOnly) inst.s_beta_p.resize(0);
  if (output_dim > 0) {
    inst.w_a = normal(output_dim, hidden_dim);
    cfg.shape = {hidden_dim, 1};
    const PassportKey active = SamplePassport(cfg, rng);
    inst.s_gamma_a = active.s_gamma.vec();
    inst.s_beta_a = active.s_beta.vec();
  }
  inst.x = normal(input_dim, 1);
  return inst;
}

}  // namespace fedpass
