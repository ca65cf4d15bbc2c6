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

#include "fedpass/losses.h"

#include <cmath>
#include <string>

namespace fedpass {

Tensor Softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [batch x classes]");
  Tensor out = logits;
  auto m = out.matrix();
  for (Index r = 0; r < m.rows(); ++r) {
    const double peak = m.row(r).maxCoeff();
    m.row(r).array() = (m.row(r).array() - peak).exp();
    m.row(r) /= m.row(r).sum();
  }
  return out;
}

LossAndGrad CrossEntropyLoss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross-entropy expects [batch x classes]");
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("cross-entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  }
  LossAndGrad out{0.0, Tensor(logits.shape())};
  const auto z = logits.matrix();
  auto g = out.grad.matrix();
  for (Index r = 0; r < batch; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes) {
      throw InvalidArgument("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    const double peak = z.row(r).maxCoeff();
    const Eigen::RowVectorXd shifted = z.row(r).array() - peak;
    const double log_sum = std::log(shifted.array().exp().sum());
    out.loss += log_sum - shifted[label];
    g.row(r) = (shifted.array() - log_sum).exp();
    g(r, label) -= 1.0;
  }
  out.loss /= static_cast<double>(batch);
  g /= static_cast<double>(batch);
  return out;
}

LossAndGrad MseLoss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: " + ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  }
  const double n = static_cast<double>(a.size());
  const Vector diff = a.vec() - b.vec();
  return {diff.squaredNorm() / n, Tensor(a.shape(), (2.0 / n) * diff)};
}

std::vector<int> ArgmaxRows(const Tensor& scores) {
  const auto m = scores.matrix();
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    Index best = 0;
    m.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace fedpass
