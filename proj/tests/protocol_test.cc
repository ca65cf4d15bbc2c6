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

#include "fedpass/protocol.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fedpass/data.h"
#include "fedpass/errors.h"
#include "fedpass/losses.h"
#include "fedpass/models.h"
#include "test_util.h"

namespace fedpass {
namespace {

using ::fedpass::testing::RelErr;

using Idx = std::vector<Index>;

std::vector<Index> Iota(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

struct Blobs {
  Dataset train;
  Dataset test;
};

Blobs MakeBlobs(std::uint64_t seed, Index train = 400, Index test = 200) {
  Rng rng(seed);
  SynthSpec spec;
  spec.n = train + test;
  const Dataset all = SynthDataset(spec, rng);
  const std::vector<Index> idx = Iota(spec.n);
  auto part = [&](Index begin, Index end) {
    std::vector<Index> rows(idx.begin() + begin, idx.begin() + end);
    Dataset d{GatherRows(all.features, rows), {}};
    for (Index r : rows) d.labels.push_back(all.labels[static_cast<std::size_t>(r)]);
    return d;
  };
  return {part(0, train), part(train, spec.n)};
}

// K passive mlp parties over `features` plus an active head.
Federation MakeFederation(const Tensor& features, const std::vector<int>& labels, int classes,
                          int parties, const std::optional<PassportConfig>& passport,
                          std::uint64_t seed, FaultInjector faults = {}) {
  Rng rng(seed);
  const std::vector<Tensor> shards = VerticalSplit(features, parties);
  ArchSpec arch;
  arch.mlp_dims = {shards[0].dim(1), 16, 8};
  std::vector<PassiveParty> passive;
  for (int k = 0; k < parties; ++k) {
    arch.mlp_dims.front() = shards[static_cast<std::size_t>(k)].dim(1);
    passive.emplace_back(k, shards[static_cast<std::size_t>(k)],
                         BuildPassiveModel(arch, {arch.mlp_dims.front()}, passport, rng),
                         NoDefense{}, seed * 31 + static_cast<std::uint64_t>(k));
  }
  ActiveParty active(labels, classes, BuildActiveModel(arch, classes, passport, rng), NoDefense{},
                     seed * 31 + 100);
  return {std::move(passive), std::move(active), Transport(parties, faults)};
}

EvalSet MakeEval(const Dataset& d, int parties) { return {VerticalSplit(d.features, parties), d.labels}; }

PassportConfig SmallPassports() {
  PassportConfig cfg;
  cfg.range = 5.0;
  cfg.sigma2 = 1.0;
  return cfg;
}

// ---- Alignment ----

TEST(AlignRecordsTest, PairIntersection) {
  EXPECT_EQ(AlignRecords({{1, 2, 3}, {2, 3, 4}}), (std::vector<std::int64_t>{2, 3}));
}

TEST(AlignRecordsTest, IdenticalListsGiveSortedIdentity) {
  EXPECT_EQ(AlignRecords({{0, 1, 2, 3}, {0, 1, 2, 3}}), (std::vector<std::int64_t>{0, 1, 2, 3}));
  EXPECT_EQ(AlignRecords({{3, 1, 2}, {2, 3, 1}}), (std::vector<std::int64_t>{1, 2, 3}));
}

TEST(AlignRecordsTest, ThreePartiesMatchBruteForceIntersection) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::int64_t>> lists(3);
    for (auto& list : lists) {
      for (std::int64_t id = 0; id < 200; ++id) {
        if (rng.Uniform(0, 1) < 0.7) list.push_back(id);
      }
      std::shuffle(list.begin(), list.end(), rng.engine());
    }
    std::vector<std::int64_t> expected;
    for (std::int64_t id = 0; id < 200; ++id) {
      bool all = true;
      for (const auto& list : lists) {
        all = all && std::find(list.begin(), list.end(), id) != list.end();
      }
      if (all) expected.push_back(id);
    }
    EXPECT_EQ(AlignRecords(lists), expected);
  }
}

TEST(AlignRecordsTest, EmptyIntersectionThrows) {
  EXPECT_THROW(AlignRecords({{1, 2}, {3, 4}}), InvalidArgument);
}

TEST(AlignRecordsTest, DuplicateIdsThrow) {
  EXPECT_THROW(AlignRecords({{1, 1, 2}, {1, 2}}), InvalidArgument);
}

// ---- Passive forward ----

TEST(PassiveForwardTest, IdentityModelSendsRawBatch) {
  Rng rng(1);
  const Tensor x = rng.NormalTensor({6, 3}, 0, 1);
  PassiveParty party(0, x, Network{}, NoDefense{}, 7);
  const std::vector<Index> batch{4, 1, 2};
  const ForwardEmbedding e = party.Forward(batch, 0);
  EXPECT_EQ(e.batch, batch);
  EXPECT_EQ(MaxAbsDiff(e.h, GatherRows(x, batch)), 0.0);
}

TEST(PassiveForwardTest, PassportsChangeEmbeddingsAcrossRounds) {
  const Blobs blobs = MakeBlobs(2);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2,
                                  SmallPassports(), 3);
  const std::vector<Index> batch{0, 1, 2, 3};
  const Tensor h0 = fed.passive[0].Forward(batch, 0).h;
  const Tensor h1 = fed.passive[0].Forward(batch, 1).h;
  EXPECT_GT(MaxAbsDiff(h0, h1), 0.0);
}

TEST(PassiveForwardTest, OutputShapeIsBatchByFusionDim) {
  Rng rng(4);
  const Tensor images = rng.UniformTensor({5, 1, 12, 12}, 0, 1);
  for (const char* name : {"mlp", "lenet_lite"}) {
    for (const bool with_passport : {false, true}) {
      const ArchSpec arch = ArchSpec::Parse(name, {144, 24, 10});
      std::optional<PassportConfig> cfg;
      if (with_passport) cfg = SmallPassports();
      PassiveParty party(0, images, BuildPassiveModel(arch, {1, 12, 12}, cfg, rng), NoDefense{},
                         9);
      const ForwardEmbedding e = party.Forward(Idx{0, 2, 4}, 0);
      EXPECT_EQ(e.h.shape(), (Shape{3, 10})) << name << " passport=" << with_passport;
    }
  }
}

TEST(PassiveForwardTest, ReplayedRoundThrows) {
  Rng rng(1);
  PassiveParty party(0, rng.NormalTensor({4, 2}, 0, 1), Network{}, NoDefense{}, 7);
  party.Forward(Idx{0, 1}, 3);
  EXPECT_THROW(party.Forward(Idx{0, 1}, 3), ProtocolError);
  EXPECT_THROW(party.Forward(Idx{0, 1}, 2), ProtocolError);
}

TEST(PassiveForwardTest, BadIndexThrows) {
  Rng rng(1);
  PassiveParty party(0, rng.NormalTensor({4, 2}, 0, 1), Network{}, NoDefense{}, 7);
  EXPECT_THROW(party.Forward(Idx{0, 4}, 0), InvalidArgument);
}

// ---- Active step ----

TEST(ActiveStepTest, ZeroSecondEmbeddingMatchesSingleParty) {
  Rng rng(8);
  const Tensor h = rng.NormalTensor({5, 8}, 0, 1);
  const std::vector<int> labels{0, 1, 2, 1, 0};
  ArchSpec arch;
  arch.mlp_dims = {8, 8};
  ActiveParty one(labels, 3, BuildActiveModel(arch, 3, SmallPassports(), rng), NoDefense{}, 4);
  ActiveParty two = one;
  const std::vector<Index> batch = Iota(5);
  const std::vector<ForwardEmbedding> single{{0, 0, batch, h}};
  const std::vector<ForwardEmbedding> pair{{0, 0, batch, h}, {1, 0, batch, Tensor(h.shape())}};
  const SgdOptions sgd;
  EXPECT_EQ(one.Step(single, 1, sgd).loss, two.Step(pair, 2, sgd).loss);
}

TEST(ActiveStepTest, GradientsIdenticalAcrossParties) {
  Rng rng(9);
  const std::vector<Index> batch = Iota(4);
  ArchSpec arch;
  arch.mlp_dims = {6, 6};
  ActiveParty active({1, 0, 1, 1}, 2, BuildActiveModel(arch, 2, SmallPassports(), rng),
                     NoDefense{}, 5);
  std::vector<ForwardEmbedding> embeddings;
  for (int k = 0; k < 3; ++k) embeddings.push_back({k, 0, batch, rng.NormalTensor({4, 6}, 0, 1)});
  const ActiveStep step = active.Step(embeddings, 3, SgdOptions{});
  ASSERT_EQ(step.grads.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(step.grads[static_cast<std::size_t>(k)].party, k);
    EXPECT_EQ(MaxAbsDiff(step.grads[static_cast<std::size_t>(k)].grad, step.grads[0].grad), 0.0);
  }
}

// The loss is evaluated before the update with passports drawn from the
// party's stream, so copies of the party reproduce it exactly.
TEST(ActiveStepTest, EmbeddingGradientMatchesFiniteDifferences) {
  Rng rng(10);
  const std::vector<Index> batch = Iota(3);
  const std::vector<int> labels{2, 0, 1};
  for (int instance = 0; instance < 5; ++instance) {
    ArchSpec arch = ArchSpec::Parse(instance % 2 ? "lenet_lite" : "mlp", {5, 5});
    ActiveParty active(labels, 3, BuildActiveModel(arch, 3, SmallPassports(), rng), NoDefense{},
                       static_cast<std::uint64_t>(instance));
    Tensor h = rng.NormalTensor({3, 5}, 0, 1);
    const ActiveStep step = ActiveParty(active).Step(
        std::vector<ForwardEmbedding>{{0, 0, batch, h}}, 1, SgdOptions{});
    double worst = 0.0;
    for (Index i = 0; i < h.size(); ++i) {
      const double saved = h[i];
      auto loss_at = [&](double v) {
        h[i] = v;
        return ActiveParty(active)
            .Step(std::vector<ForwardEmbedding>{{0, 0, batch, h}}, 1, SgdOptions{})
            .loss;
      };
      const double up = loss_at(saved + 1e-5);
      const double down = loss_at(saved - 1e-5);
      h[i] = saved;
      worst = std::max(worst, RelErr(step.grads[0].grad[i], (up - down) / 2e-5));
    }
    EXPECT_LT(worst, 1e-4);
  }
}

TEST(ActiveStepTest, MissingPartyThrowsNamingIt) {
  Rng rng(11);
  ArchSpec arch;
  arch.mlp_dims = {4, 4};
  ActiveParty active({0, 1}, 2, BuildActiveModel(arch, 2, std::nullopt, rng), NoDefense{}, 1);
  const std::vector<Index> batch{0, 1};
  const std::vector<ForwardEmbedding> embeddings{{0, 0, batch, Tensor({2, 4})},
                                                 {2, 0, batch, Tensor({2, 4})}};
  try {
    active.Step(embeddings, 3, SgdOptions{});
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("missing embedding from party 1"), std::string::npos);
  }
}

// ---- Passive update ----

TEST(PassiveUpdateTest, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(12);
  Network net{{Linear::Create(3, 2, rng)}};
  PassiveParty party(0, rng.NormalTensor({4, 3}, 0, 1), net, NoDefense{}, 1);
  party.Forward(Idx{0, 1}, 0);
  party.Update({0, 0, Tensor({2, 2})}, SgdOptions{0.1, 0.0, 0.9, 0.0});
  Network after = party.model();
  EXPECT_EQ(MaxParameterDiff(after, net), 0.0);
}

TEST(PassiveUpdateTest, SingleLinearLayerOuterProductRule) {
  Linear lin;
  lin.in_dim = 2;
  lin.out_dim = 1;
  lin.weight = Tensor({1, 2}, {0.5, -1.0});
  lin.bias = Tensor({1}, {0.25});
  PassiveParty party(0, Tensor({2, 2}, {1, 2, 3, 4}), Network{{lin}}, NoDefense{}, 1);
  party.Forward(Idx{0, 1}, 0);
  // W <- W - eta * G^T X, b <- b - eta * sum(G), with G = [1; -2], eta = 0.1.
  party.Update({0, 0, Tensor({2, 1}, {1, -2})}, SgdOptions{0.1, 0.0, 0.0, 0.0});
  const Linear& got = std::get<Linear>(party.model().layers[0]);
  EXPECT_NEAR(got.weight[0], 0.5 - 0.1 * (1 * 1 + -2 * 3), 1e-15);
  EXPECT_NEAR(got.weight[1], -1.0 - 0.1 * (1 * 2 + -2 * 4), 1e-15);
  EXPECT_NEAR(got.bias[0], 0.25 - 0.1 * (1 - 2), 1e-15);
}

TEST(PassiveUpdateTest, MissingTraceThrows) {
  Rng rng(1);
  PassiveParty party(0, rng.NormalTensor({4, 2}, 0, 1), Network{}, NoDefense{}, 7);
  EXPECT_THROW(party.Update({0, 0, Tensor({2, 2})}, SgdOptions{}), ProtocolError);
  party.Forward(Idx{0, 1}, 0);
  EXPECT_THROW(party.Update({1, 0, Tensor({2, 2})}, SgdOptions{}), ProtocolError);
  EXPECT_THROW(party.Update({0, 0, Tensor({3, 2})}, SgdOptions{}), ShapeError);
}

// Split training with one passive party equals training the stacked network.
TEST(PassiveUpdateTest, SplitTrainingMatchesCentralized) {
  const Blobs blobs = MakeBlobs(13, 300, 10);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 1, std::nullopt, 4);
  Network central;
  for (const Layer& l : fed.passive[0].model().layers) central.layers.push_back(l);
  for (const Layer& l : fed.active.model().layers) central.layers.push_back(l);

  TrainingConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  cfg.parties = 1;
  cfg.seed = 77;
  const History h = Train(cfg, fed);
  const std::vector<double> losses =
      TrainCentralized(cfg, central, blobs.train.features, blobs.train.labels);

  Network split;
  for (const Layer& l : fed.passive[0].model().layers) split.layers.push_back(l);
  for (const Layer& l : fed.active.model().layers) split.layers.push_back(l);
  EXPECT_LT(MaxParameterDiff(split, central), 1e-10);
  ASSERT_EQ(h.loss.size(), losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) EXPECT_NEAR(h.loss[i], losses[i], 1e-10);
}

// ---- Training ----

TEST(TrainTest, ZeroRoundsLeaveParametersUnchanged) {
  const Blobs blobs = MakeBlobs(14);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2,
                                  SmallPassports(), 5);
  Network before = fed.active.model();
  Network passive_before = fed.passive[1].model();
  TrainingConfig cfg;
  cfg.rounds = 0;
  const History h = Train(cfg, fed);
  EXPECT_TRUE(h.loss.empty());
  Network after = fed.active.model();
  Network passive_after = fed.passive[1].model();
  EXPECT_EQ(MaxParameterDiff(before, after), 0.0);
  EXPECT_EQ(MaxParameterDiff(passive_before, passive_after), 0.0);
}

TEST(TrainTest, SeparableBlobsReachHighAccuracy) {
  const Blobs blobs = MakeBlobs(15);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2, std::nullopt, 6);
  TrainingConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 1;
  const EvalSet eval = MakeEval(blobs.test, 2);
  const History h = Train(cfg, fed, &eval);
  ASSERT_FALSE(h.accuracy.empty());
  EXPECT_GE(h.accuracy.back().second, 0.95);
}

TEST(TrainTest, SameSeedIsBitIdentical) {
  const Blobs blobs = MakeBlobs(16);
  auto run = [&] {
    Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2,
                                    SmallPassports(), 8);
    TrainingConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 3;
    const History h = Train(cfg, fed);
    return std::make_pair(h.loss, std::move(fed));
  };
  auto [loss_a, fed_a] = run();
  auto [loss_b, fed_b] = run();
  EXPECT_EQ(loss_a, loss_b);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(MaxParameterDiff(fed_a.passive[static_cast<std::size_t>(k)].mutable_model(),
                               fed_b.passive[static_cast<std::size_t>(k)].mutable_model()),
              0.0);
  }
  EXPECT_EQ(MaxParameterDiff(fed_a.active.mutable_model(), fed_b.active.mutable_model()), 0.0);
}

// Full-batch rounds, so the per-round loss is one objective evaluated along
// the optimization path. Plain gradient steps: heavy-ball momentum is not a
// descent method and may overshoot early on.
TEST(TrainTest, LossDecreasesOverFirstRoundsForMostSeeds) {
  int monotone = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    const Blobs blobs = MakeBlobs(100 + static_cast<std::uint64_t>(seed), 200, 1);
    Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2, std::nullopt,
                                    static_cast<std::uint64_t>(seed));
    TrainingConfig cfg;
    cfg.rounds = 10;
    cfg.batch_size = 200;
    cfg.momentum = 0.0;
    cfg.lr = 0.05;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const History h = Train(cfg, fed);
    bool ok = true;
    for (std::size_t i = 1; i < h.loss.size(); ++i) ok = ok && h.loss[i] < h.loss[i - 1];
    monotone += ok;
  }
  EXPECT_GE(monotone, 18);
}

TEST(TrainTest, InvalidConfigurationThrows) {
  const Blobs blobs = MakeBlobs(17);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2, std::nullopt, 6);
  TrainingConfig cfg;
  cfg.rounds = 1;
  cfg.parties = 3;
  EXPECT_THROW(Train(cfg, fed), InvalidArgument);
  cfg.parties = 2;
  cfg.batch_size = 10000;
  EXPECT_THROW(Train(cfg, fed), InvalidArgument);
  cfg.batch_size = 8;
  cfg.lr = 0;
  EXPECT_THROW(Train(cfg, fed), InvalidArgument);
}

TEST(BatchScheduleTest, EachEpochCoversEveryRecordOnce) {
  BatchSchedule schedule(10, 4, 3);
  EXPECT_EQ(schedule.batches_per_epoch(), 3);
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::multiset<Index> seen;
    for (int b = 0; b < 3; ++b) {
      const auto batch = schedule.Batch(epoch * 3 + b);
      EXPECT_EQ(batch.size(), b == 2 ? 2u : 4u);
      seen.insert(batch.begin(), batch.end());
    }
    EXPECT_EQ(seen, (std::multiset<Index>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  }
}

// ---- Evaluation ----

TEST(EvaluateTest, AllCorrectToyModelScoresOne) {
  std::vector<int> labels{0, 2, 1, 2, 0};
  Tensor onehot({5, 3});
  for (Index i = 0; i < 5; ++i) onehot.matrix()(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  std::vector<PassiveParty> passive;
  passive.emplace_back(0, onehot, Network{}, NoDefense{}, 1);
  Federation fed{std::move(passive), ActiveParty(labels, 3, Network{}, NoDefense{}, 2),
                 Transport(1)};
  EXPECT_EQ(Evaluate(fed, EvalSet{{onehot}, labels}), 1.0);
}

TEST(EvaluateTest, ConstantPredictorNearChance) {
  Rng rng(18);
  const Index n = 1000;
  std::vector<int> labels;
  for (Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.UniformIndex(10)));
  Linear head;
  head.in_dim = 2;
  head.out_dim = 10;
  head.weight = Tensor({10, 2});
  head.bias = Tensor({10});
  head.bias[3] = 1.0;
  const Tensor x = rng.NormalTensor({n, 2}, 0, 1);
  std::vector<PassiveParty> passive;
  passive.emplace_back(0, x, Network{}, NoDefense{}, 1);
  Federation fed{std::move(passive), ActiveParty(labels, 10, Network{{head}}, NoDefense{}, 2),
                 Transport(1)};
  EXPECT_NEAR(Evaluate(fed, EvalSet{{x}, labels}), 0.1, 0.03);
}

TEST(EvaluateTest, InvariantUnderTestPermutation) {
  const Blobs blobs = MakeBlobs(19);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2, std::nullopt, 6);
  TrainingConfig cfg;
  cfg.epochs = 1;
  Train(cfg, fed);
  Rng rng(20);
  const std::vector<Index> perm = rng.Permutation(blobs.test.size());
  Dataset shuffled{GatherRows(blobs.test.features, perm), {}};
  for (Index i : perm) shuffled.labels.push_back(blobs.test.labels[static_cast<std::size_t>(i)]);
  EXPECT_EQ(Evaluate(fed, MakeEval(blobs.test, 2), 64), Evaluate(fed, MakeEval(shuffled, 2), 64));
}

// ---- Transport and protocol safety ----

TEST(ProtocolTest, TrainingLogHasFullRounds) {
  const Blobs blobs = MakeBlobs(21);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 3,
                                  SmallPassports(), 6);
  TrainingConfig cfg;
  cfg.rounds = 7;
  cfg.parties = 3;
  Train(cfg, fed);
  EXPECT_EQ(fed.transport.log().size(), 7u * 6u);
  EXPECT_NO_THROW(CheckProtocolLog(fed.transport.log(), 3));
}

TEST(ProtocolTest, LogCheckerRejectsEarlyGradient) {
  using K = LogEntry::Kind;
  const std::vector<LogEntry> bad{
      {K::kForward, 0, 0}, {K::kBackward, 0, 0}, {K::kForward, 1, 0}, {K::kBackward, 1, 0}};
  EXPECT_THROW(CheckProtocolLog(bad, 2), ProtocolError);
  const std::vector<LogEntry> short_round{{K::kForward, 0, 0}, {K::kForward, 1, 0}};
  EXPECT_THROW(CheckProtocolLog(short_round, 2), ProtocolError);
}

TEST(ProtocolTest, TransportRefusesEarlyAndDuplicateMessages) {
  Transport t(2);
  EXPECT_THROW(t.Send(BackwardGradient{0, 0, Tensor({1, 1})}), ProtocolError);
  t.Send(ForwardEmbedding{0, 0, {0}, Tensor({1, 1})});
  EXPECT_THROW(t.Send(ForwardEmbedding{0, 0, {0}, Tensor({1, 1})}), ProtocolError);
  EXPECT_THROW(t.Send(ForwardEmbedding{5, 0, {0}, Tensor({1, 1})}), ProtocolError);
  EXPECT_THROW(t.CollectForward(0), ProtocolError);
}

TEST(ProtocolTest, DroppedPartySurfacesAsMissingEmbedding) {
  const Blobs blobs = MakeBlobs(22);
  FaultInjector faults;
  faults.drop_forward_from = 1;
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2, std::nullopt,
                                  6, faults);
  TrainingConfig cfg;
  cfg.rounds = 1;
  try {
    Train(cfg, fed);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("missing embedding from party 1"), std::string::npos);
  }
}

TEST(ProtocolTest, ReorderedDeliveryGivesSameResult) {
  const Blobs blobs = MakeBlobs(23);
  FaultInjector faults;
  faults.reorder = true;
  faults.seed = 4;
  Federation plain = MakeFederation(blobs.train.features, blobs.train.labels, 2, 3,
                                    std::nullopt, 6);
  Federation shuffled = MakeFederation(blobs.train.features, blobs.train.labels, 2, 3,
                                       std::nullopt, 6, faults);
  TrainingConfig cfg;
  cfg.rounds = 5;
  cfg.parties = 3;
  EXPECT_EQ(Train(cfg, plain).loss, Train(cfg, shuffled).loss);
  EXPECT_NO_THROW(CheckProtocolLog(shuffled.transport.log(), 3));
}

TEST(ProtocolTest, StateInventoriesRespectTheInformationBoundary) {
  const Blobs blobs = MakeBlobs(24);
  Federation fed = MakeFederation(blobs.train.features, blobs.train.labels, 2, 2,
                                  SmallPassports(), 6);
  for (const PassiveParty& p : fed.passive) {
    const StateInventory inv = p.Inspect();
    EXPECT_EQ(std::count(inv.begin(), inv.end(), "labels"), 0);
    EXPECT_EQ(std::count(inv.begin(), inv.end(), "features"), 1);
  }
  const StateInventory active = fed.active.Inspect();
  EXPECT_EQ(std::count(active.begin(), active.end(), "features"), 0);
  EXPECT_EQ(std::count(active.begin(), active.end(), "labels"), 1);
}

}  // namespace
}  // namespace fedpass
