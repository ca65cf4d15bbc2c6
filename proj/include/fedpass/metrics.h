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


#ifndef FEDPASS_METRICS_H_
#define FEDPASS_METRICS_H_

#include <span>
#include <utility>
#include <vector>

#include "fedpass/tensor.h"

namespace fedpass {

// Mean squared elementwise difference between a private input and its
// reconstruction.
double MseRecoveryError(const Tensor& x, const Tensor& x_hat);

// Fraction of positions where the predicted label differs from the truth.
double LabelError(std::span<const int> pred, std::span<const int> truth);

struct CapSetting {
  double accuracy = 0.0;
  double recovery_error = 0.0;
};

// Calibrated averaged performance: mean of accuracy * recovery error over the
// defense-strength settings.
double Cap(std::span<const CapSetting> settings);

}  // namespace fedpass

#endif  // FEDPASS_METRICS_H_
