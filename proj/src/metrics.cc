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


#include "fedpass/metrics.h"

#include <string>

#include "fedpass/errors.h"

namespace fedpass {

double MseRecoveryError(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw ShapeError("recovery error: " + ShapeString(x.shape()) + " vs " +
                     ShapeString(x_hat.shape()));
  }
  return (x.vec() - x_hat.vec()).squaredNorm() / static_cast<double>(x.size());
}

double LabelError(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("label error: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw InvalidArgument("label error of an empty list");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

double Cap(std::span<const CapSetting> settings) {
  if (settings.empty()) throw InvalidArgument("cap needs at least one setting");
  double sum = 0.0;
  for (const CapSetting& s : settings) sum += s.accuracy * s.recovery_error;
  return sum / static_cast<double>(settings.size());
}

}  // namespace fedpass
