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

#include <gtest/gtest.h>

#include <algorithm>

#include "fedpass/errors.h"
#include "fedpass/losses.h"
#include "fedpass/random.h"

namespace fedpass {
namespace {

TEST(MseRecoveryErrorTest, Examples) {
  const Tensor x({2}, {0, 0});
  EXPECT_EQ(MseRecoveryError(x, x), 0.0);
  EXPECT_EQ(MseRecoveryError(x, Tensor({2}, {1, 1})), 1.0);
  EXPECT_THROW(MseRecoveryError(x, Tensor({3})), ShapeError);
}

TEST(MseRecoveryErrorTest, AgreesWithMseLoss) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Tensor a = rng.NormalTensor({3, 4}, 0, 1), b = rng.NormalTensor({3, 4}, 0, 1);
    EXPECT_DOUBLE_EQ(MseRecoveryError(a, b), MseLoss(a, b).loss);
  }
}

TEST(LabelErrorTest, Examples) {
  const std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> b{1, 2, 3, 4, 5, 6, 7, 8, 9, 0};
  EXPECT_EQ(LabelError(a, a), 0.0);
  EXPECT_EQ(LabelError(a, b), 1.0);
  std::copy(a.begin(), a.begin() + 5, b.begin());
  EXPECT_EQ(LabelError(a, b), 0.5);
  EXPECT_THROW(LabelError(a, std::vector<int>{1}), ShapeError);
}

TEST(CapTest, Examples) {
  const std::vector<CapSetting> two{{1.0, 0.5}, {0.8, 0.25}};
  EXPECT_DOUBLE_EQ(Cap(two), 0.35);
  const std::vector<CapSetting> one{{0.7, 0.3}};
  EXPECT_DOUBLE_EQ(Cap(one), 0.7 * 0.3);
  EXPECT_THROW(Cap({}), InvalidArgument);
}

TEST(CapTest, MatchesNaiveLoopAndIsPermutationInvariant) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<CapSetting> s(static_cast<std::size_t>(1 + rng.UniformIndex(8)));
    for (auto& c : s) c = {rng.Uniform(0, 1), rng.Uniform(0, 2)};
    double naive = 0;
    for (const auto& c : s) naive += c.accuracy * c.recovery_error / s.size();
    EXPECT_NEAR(Cap(s), naive, 1e-14);
    std::shuffle(s.begin(), s.end(), rng.engine());
    EXPECT_NEAR(Cap(s), naive, 1e-14);
  }
}

}  // namespace
}  // namespace fedpass
