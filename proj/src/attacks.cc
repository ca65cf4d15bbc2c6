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

#include "fedpass/attacks.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedpass/errors.h"
#include "fedpass/losses.h"
#include "fedpass/metrics.h"

namespace fedpass {
namespace {

constexpr int kMaxHalvings = 60;
constexpr double kMaxStep = 1e12;

using PlaneMap = Eigen::Map<Matrix>;
using ConstPlaneMap = Eigen::Map<const Matrix>;

// Flattened parameters of `net`, in Parameters() order.
Vector FlattenParams(Network& net) {
  Index total = 0;
  for (Tensor* p : Parameters(net)) total += p->size();
  Vector v(total);
  Index at = 0;
  for (Tensor* p : Parameters(net)) {
    v.segment(at, p->size()) = p->vec();
    at += p->size();
  }
  return v;
}

void AssignParams(Network& net, const Vector& v) {
  Index at = 0;
  for (Tensor* p : Parameters(net)) {
    p->vec() = v.segment(at, p->size());
    at += p->size();
  }
}

Vector FlattenGrads(const Gradients& g, Index total) {
  Vector v(total);
  Index at = 0;
  for (const auto& layer : g.params) {
    for (const Tensor& t : layer) {
      v.segment(at, t.size()) = t.vec();
      at += t.size();
    }
  }
  return v;
}

Shape WithBatch(Index batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace

void AttackConfig::Validate() const {
  if (iterations < 1) throw InvalidArgument("attack iterations must be >= 1");
  if (!(step_size > 0)) throw InvalidArgument("attack step size must be > 0");
  if (!(tv_lambda >= 0)) throw InvalidArgument("TV weight must be >= 0");
  if (restarts < 1) throw InvalidArgument("attack restarts must be >= 1");
  if (!(init_stddev >= 0)) throw InvalidArgument("init stddev must be >= 0");
  if (shadow_iterations < 1 || pmc_iterations < 1) {
    throw InvalidArgument("shadow and PMC iterations must be >= 1");
  }
}

DescentResult BacktrackingDescent(const Objective& f, Vector x0, int iterations,
                                  double step_size) {
  DescentResult out;
  out.x = std::move(x0);
  Vector g(out.x.size());
  out.loss = f(out.x, &g);
  out.trace.push_back(out.loss);
  if (!std::isfinite(out.loss) || !g.allFinite()) {
    out.finite = false;
    return out;
  }
  double eta = step_size;
  Vector trial_g(out.x.size());
  int evaluations = 1;
  while (evaluations < iterations && out.loss > 0.0 && g.squaredNorm() > 0.0) {
    bool accepted = false;
    Vector trial;
    double trial_loss = 0.0;
    for (int h = 0; h < kMaxHalvings && evaluations < iterations; ++h) {
      trial = out.x - eta * g;
      trial_loss = f(trial, &trial_g);
      ++evaluations;
      if (std::isfinite(trial_loss) && trial_g.allFinite() && trial_loss <= out.loss) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    const Vector s = trial - out.x;
    const double sy = s.dot(trial_g - g);
    eta = sy > 0 ? std::min(kMaxStep, s.squaredNorm() / sy) : std::min(kMaxStep, 2.0 * eta);
    out.x = std::move(trial);
    out.loss = trial_loss;
    g.swap(trial_g);
    out.trace.push_back(out.loss);
  }
  return out;
}

TvValue TotalVariation(const Tensor& x) {
  if (x.size() == 0) throw InvalidArgument("total variation of an empty tensor");
  TvValue out{0.0, Tensor(x.shape())};
  // Every tensor is a stack of planes; vectors are planes with one axis.
  Index planes = 1, rows = 1, cols = x.size();
  bool vertical = false;
  if (x.rank() == 2) {
    rows = x.dim(0);
    cols = x.dim(1);
  } else if (x.rank() >= 3) {
    rows = x.dim(x.rank() - 2);
    cols = x.dim(x.rank() - 1);
    planes = x.size() / (rows * cols);
    vertical = true;
  }
  for (Index p = 0; p < planes; ++p) {
    ConstPlaneMap a(x.data() + p * rows * cols, rows, cols);
    PlaneMap g(out.grad.data() + p * rows * cols, rows, cols);
    if (cols > 1) {
      const Matrix d = a.rightCols(cols - 1) - a.leftCols(cols - 1);
      out.value += d.squaredNorm();
      g.rightCols(cols - 1) += 2.0 * d;
      g.leftCols(cols - 1) -= 2.0 * d;
    }
    if (vertical && rows > 1) {
      const Matrix d = a.bottomRows(rows - 1) - a.topRows(rows - 1);
      out.value += d.squaredNorm();
      g.bottomRows(rows - 1) += 2.0 * d;
      g.topRows(rows - 1) -= 2.0 * d;
    }
  }
  return out;
}

PassportBindings NeutralGuess(const Network& net) {
  PassportBindings guess;
  for (std::size_t slot : net.passport_slots()) {
    const auto& layer = std::get<PassportLayer>(net.layers[slot]);
    guess.emplace(slot, PassportBinding::Fixed(ScaleBias::Neutral(layer.out_channels())));
  }
  return guess;
}

InversionResult CafeInvert(const PublicModel& model, const Tensor& target_h,
                           const AttackConfig& cfg,
                           const std::optional<PassportBindings>& guess) {
  cfg.Validate();
  if (target_h.rank() < 1 || target_h.dim(0) < 1) throw ShapeError("empty inversion target");
  const Index batch = target_h.dim(0);
  const Shape x_shape = WithBatch(batch, model.input_shape);
  const Shape out_shape = model.net.OutputShapeFor(x_shape);
  if (out_shape != target_h.shape()) {
    throw ShapeError("model output " + ShapeString(out_shape) + " vs target " +
                     ShapeString(target_h.shape()));
  }
  const PassportBindings base = guess ? *guess : NeutralGuess(model.net);
  const Index x_size = NumElements(x_shape);

  // Optional passport unknowns follow x in the search vector.
  struct FreeSlot {
    std::size_t slot;
    Index channels;
    Index offset;
  };
  std::vector<FreeSlot> free;
  Index total = x_size;
  if (cfg.optimize_passports) {
    for (const auto& [slot, binding] : base) {
      if (!binding.fixed) throw InvalidArgument("passport fitting needs fixed scale/bias guesses");
      const Index c = binding.fixed->gamma.size();
      free.push_back({slot, c, total});
      total += 2 * c;
    }
  }

  auto unpack = [&](const Vector& z, Tensor& x, PassportBindings& bindings) {
    x = Tensor(x_shape, z.head(x_size));
    bindings = base;
    for (const FreeSlot& f : free) {
      bindings[f.slot] = PassportBinding::Fixed(
          {z.segment(f.offset, f.channels), z.segment(f.offset + f.channels, f.channels)});
    }
  };

  const Objective objective = [&](const Vector& z, Vector* grad) {
    Tensor x;
    PassportBindings bindings;
    unpack(z, x, bindings);
    const ActivationTrace trace = Forward(model.net, x, bindings);
    Tensor r = trace.output();
    r.vec() -= target_h.vec();
    double loss = r.vec().squaredNorm();
    TvValue tv;
    if (cfg.tv_lambda > 0) {
      tv = TotalVariation(x);
      loss += cfg.tv_lambda * tv.value;
    }
    if (grad != nullptr) {
      r.vec() *= 2.0;
      const Gradients g = Backward(model.net, trace, r);
      grad->resize(total);
      grad->head(x_size) = g.input.vec();
      if (cfg.tv_lambda > 0) grad->head(x_size) += cfg.tv_lambda * tv.grad.vec();
      for (const FreeSlot& f : free) {
        const ScaleBias& d = g.passport_fixed.at(f.slot);
        grad->segment(f.offset, f.channels) = d.gamma;
        grad->segment(f.offset + f.channels, f.channels) = d.beta;
      }
    }
    return loss;
  };

  InversionResult best;
  best.loss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng = Rng::Derive(cfg.seed, static_cast<std::uint64_t>(r));
    Vector z(total);
    z.head(x_size) = rng.NormalTensor(x_shape, 0.0, cfg.init_stddev).vec();
    for (const FreeSlot& f : free) {
      const ScaleBias& sb = *base.at(f.slot).fixed;
      z.segment(f.offset, f.channels) = sb.gamma;
      z.segment(f.offset + f.channels, f.channels) = sb.beta;
    }
    DescentResult run = BacktrackingDescent(objective, std::move(z), cfg.iterations, cfg.step_size);
    if (!run.finite || !std::isfinite(run.loss)) {
      ++best.failed_restarts;
      continue;
    }
    if (run.loss < best.loss) {
      PassportBindings fitted;
      unpack(run.x, best.x_hat, fitted);
      best.loss = run.loss;
      best.trace = std::move(run.trace);
      best.fitted_passports.clear();
      for (const FreeSlot& f : free) best.fitted_passports[f.slot] = *fitted.at(f.slot).fixed;
    }
  }
  if (best.failed_restarts == cfg.restarts) {
    throw NumericalError("inversion failed: all " + std::to_string(cfg.restarts) +
                         " restarts produced a non-finite loss");
  }
  return best;
}

ShadowFit FitShadow(Network skeleton, const Tensor& probe_x, const Tensor& probe_h,
                    const AttackConfig& cfg) {
  cfg.Validate();
  if (probe_x.rank() < 1 || probe_x.dim(0) == 0) {
    throw InvalidArgument("shadow fitting needs at least one probe pair");
  }
  if (probe_h.dim(0) != probe_x.dim(0)) throw ShapeError("probe inputs and outputs disagree");
  if (!skeleton.passport_slots().empty()) throw InvalidArgument("shadow models carry no passports");
  const Vector start = FlattenParams(skeleton);
  const Index total = start.size();
  const Objective objective = [&](const Vector& theta, Vector* grad) {
    AssignParams(skeleton, theta);
    const ActivationTrace trace = Forward(skeleton, probe_x);
    const LossAndGrad mse = MseLoss(trace.output(), probe_h);
    if (grad != nullptr) *grad = FlattenGrads(Backward(skeleton, trace, mse.grad), total);
    return mse.loss;
  };
  const double initial = objective(start, nullptr);
  const DescentResult run =
      BacktrackingDescent(objective, start, cfg.shadow_iterations, cfg.step_size);
  if (!run.finite || !std::isfinite(run.loss)) {
    throw NumericalError("shadow training diverged: initial loss " + std::to_string(initial) +
                         ", final " + std::to_string(run.loss) + " after " +
                         std::to_string(run.trace.size()) + " accepted steps");
  }
  AssignParams(skeleton, run.x);
  return {std::move(skeleton), run.loss};
}

MiResult MiBlackbox(Network skeleton, const Tensor& probe_x, const Tensor& probe_h,
                    const Tensor& target_h, const AttackConfig& cfg) {
  MiResult out;
  out.shadow = FitShadow(std::move(skeleton), probe_x, probe_h, cfg);
  const Shape sample(probe_x.shape().begin() + 1, probe_x.shape().end());
  out.inversion = CafeInvert(PublicModel{out.shadow.model, sample}, target_h, cfg);
  return out;
}

std::vector<int> PmcModel::Predict(const Tensor& h) const {
  Matrix scores = h.matrix() * w.transpose();
  scores.rowwise() += b.transpose();
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index r = 0; r < scores.rows(); ++r) {
    Index best = 0;
    scores.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

PmcModel FitPmc(const Tensor& aux_h, std::span<const int> aux_y, int classes,
                const AttackConfig& cfg, PmcHead head) {
  cfg.Validate();
  if (aux_h.rank() < 1 || aux_h.dim(0) == 0) throw InvalidArgument("PMC needs auxiliary samples");
  const Index n = aux_h.dim(0);
  if (static_cast<Index>(aux_y.size()) != n) throw ShapeError("auxiliary labels do not match");
  if (classes < 2) throw InvalidArgument("PMC needs at least two classes");
  const auto h = aux_h.matrix();
  const Index features = h.cols();
  Matrix onehot = Matrix::Zero(n, classes);
  for (Index i = 0; i < n; ++i) {
    const int y = aux_y[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw InvalidArgument("auxiliary label out of range");
    onehot(i, y) = 1.0;
  }
  const bool softmax = head == PmcHead::kSoftmax;
  const Index w_size = classes * features;
  const Index total = w_size + (softmax ? classes : 0);

  const Objective objective = [&](const Vector& z, Vector* grad) {
    Eigen::Map<const Matrix> w(z.data(), classes, features);
    Matrix scores = h * w.transpose();
    Matrix d;
    double loss = 0.0;
    if (softmax) {
      scores.rowwise() += z.tail(classes).transpose();
      const Tensor logits({n, classes}, Eigen::Map<const Vector>(scores.data(), scores.size()));
      const LossAndGrad ce = CrossEntropyLoss(logits, aux_y);
      loss = ce.loss;
      d = ce.grad.matrix();
    } else {
      const Matrix r = scores - onehot;
      loss = r.squaredNorm();
      d = 2.0 * r;
    }
    if (grad != nullptr) {
      grad->resize(total);
      Eigen::Map<Matrix>(grad->data(), classes, features) = d.transpose() * h;
      if (softmax) grad->tail(classes) = d.colwise().sum().transpose();
    }
    return loss;
  };
  const DescentResult run =
      BacktrackingDescent(objective, Vector::Zero(total), cfg.pmc_iterations, cfg.step_size);
  if (!run.finite || !std::isfinite(run.loss)) throw NumericalError("PMC head training diverged");
  PmcModel model;
  model.head = head;
  model.w = Eigen::Map<const Matrix>(run.x.data(), classes, features);
  model.b = softmax ? Vector(run.x.tail(classes)) : Vector::Zero(classes);
  model.train_loss = run.loss;
  return model;
}

PmcResult PmcAttack(const Tensor& aux_h, std::span<const int> aux_y, const Tensor& test_h,
                    std::span<const int> test_y, int classes, const AttackConfig& cfg,
                    PmcHead head) {
  PmcResult out;
  out.model = FitPmc(aux_h, aux_y, classes, cfg, head);
  if (test_h.rank() != 2 || test_h.dim(1) != aux_h.matrix().cols()) {
    throw ShapeError("test embeddings " + ShapeString(test_h.shape()) +
                     " do not match the auxiliary width");
  }
  out.predictions = out.model.Predict(test_h);
  out.label_error = LabelError(out.predictions, test_y);
  return out;
}

namespace {

AttackReport Finish(std::string attack, std::vector<double> values) {
  AttackReport r{std::move(attack), std::move(values), 0.0};
  if (!r.per_sample.empty()) {
    r.aggregate = Eigen::Map<const Vector>(r.per_sample.data(),
                                          static_cast<Index>(r.per_sample.size()))
                      .mean();
  }
  return r;
}

}  // namespace

AttackReport FeatureReport(std::string attack, const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape() || x.rank() < 1) {
    throw ShapeError("reconstruction " + ShapeString(x_hat.shape()) + " vs input " +
                     ShapeString(x.shape()));
  }
  const auto a = x.matrix();
  const auto b = x_hat.matrix();
  std::vector<double> values(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) {
    values[static_cast<std::size_t>(i)] = (a.row(i) - b.row(i)).squaredNorm() / a.cols();
  }
  return Finish(std::move(attack), std::move(values));
}

AttackReport LabelReport(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeError("prediction and label counts differ");
  std::vector<double> values(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) values[i] = pred[i] == truth[i] ? 1.0 : 0.0;
  return Finish("pmc", std::move(values));
}

}  // namespace fedpass
