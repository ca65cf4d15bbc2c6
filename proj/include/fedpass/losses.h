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

#ifndef FEDPASS_LOSSES_H_
#define FEDPASS_LOSSES_H_

#include <span>
#include <vector>

#include "fedpass/tensor.h"

namespace fedpass {

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

// Mean softmax cross-entropy over the batch; grad = (softmax - onehot) / batch.
LossAndGrad CrossEntropyLoss(const Tensor& logits, std::span<const int> labels);

// Mean of squared elementwise differences; grad is with respect to `a`.
LossAndGrad MseLoss(const Tensor& a, const Tensor& b);

// Row-wise softmax of a [batch x classes] tensor.
Tensor Softmax(const Tensor& logits);

std::vector<int> ArgmaxRows(const Tensor& scores);

}  // namespace fedpass

#endif  // FEDPASS_LOSSES_H_
