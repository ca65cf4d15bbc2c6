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

#include <algorithm>
#include <string>

#include "fedpass/errors.h"
#include "fedpass/losses.h"

namespace fedpass {
namespace {

std::string RoundTag(int round) { return "round " + std::to_string(round) + ": "; }

Shape SampleShape(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

}  // namespace

std::vector<std::int64_t> AlignRecords(const std::vector<std::vector<std::int64_t>>& id_lists) {
  if (id_lists.empty()) throw InvalidArgument("alignment needs at least one id list");
  std::vector<std::int64_t> common;
  for (std::size_t k = 0; k < id_lists.size(); ++k) {
    std::vector<std::int64_t> ids = id_lists[k];
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw InvalidArgument("party " + std::to_string(k) + " lists a record id twice");
    }
    if (k == 0) {
      common = std::move(ids);
    } else {
      std::vector<std::int64_t> next;
      std::set_intersection(common.begin(), common.end(), ids.begin(), ids.end(),
                            std::back_inserter(next));
      common = std::move(next);
    }
  }
  if (common.empty()) throw InvalidArgument("parties share no record ids");
  return common;
}

Transport::Transport(int parties, FaultInjector faults)
    : parties_(parties), faults_(faults), fault_rng_(faults.seed) {
  if (parties < 1) throw InvalidArgument("transport needs at least one party");
}

void Transport::Send(Message message) {
  if (auto* f = std::get_if<ForwardEmbedding>(&message)) {
    if (f->party < 0 || f->party >= parties_) {
      throw ProtocolError("embedding from unknown party " + std::to_string(f->party));
    }
    if (!forward_seen_.insert({f->party, f->round}).second) {
      throw ProtocolError(RoundTag(f->round) + "duplicate embedding from party " +
                          std::to_string(f->party));
    }
    if (faults_.drop_forward_from && *faults_.drop_forward_from == f->party) return;
    forward_.push_back(std::move(*f));
    return;
  }
  auto& b = std::get<BackwardGradient>(message);
  if (!collected_rounds_.contains(b.round)) {
    throw ProtocolError(RoundTag(b.round) + "gradient sent before all embeddings arrived");
  }
  if (!backward_seen_.insert({b.party, b.round}).second) {
    throw ProtocolError(RoundTag(b.round) + "duplicate gradient for party " +
                        std::to_string(b.party));
  }
  backward_.push_back(std::move(b));
}

std::vector<ForwardEmbedding> Transport::CollectForward(int round) {
  std::vector<ForwardEmbedding> got;
  for (auto it = forward_.begin(); it != forward_.end();) {
    if (it->round == round) {
      got.push_back(std::move(*it));
      it = forward_.erase(it);
    } else {
      ++it;
    }
  }
  if (faults_.reorder) std::shuffle(got.begin(), got.end(), fault_rng_.engine());
  std::vector<bool> present(static_cast<std::size_t>(parties_), false);
  for (const auto& f : got) present[static_cast<std::size_t>(f.party)] = true;
  for (PartyId p = 0; p < parties_; ++p) {
    if (!present[static_cast<std::size_t>(p)]) {
      throw ProtocolError(RoundTag(round) + "missing embedding from party " + std::to_string(p));
    }
  }
  for (const auto& f : got) log_.push_back({LogEntry::Kind::kForward, f.party, round});
  std::sort(got.begin(), got.end(),
            [](const ForwardEmbedding& a, const ForwardEmbedding& b) { return a.party < b.party; });
  collected_rounds_.insert(round);
  return got;
}

BackwardGradient Transport::CollectBackward(PartyId party, int round) {
  auto it = std::find_if(backward_.begin(), backward_.end(), [&](const BackwardGradient& b) {
    return b.party == party && b.round == round;
  });
  if (it == backward_.end()) {
    throw ProtocolError(RoundTag(round) + "no gradient for party " + std::to_string(party));
  }
  BackwardGradient out = std::move(*it);
  backward_.erase(it);
  log_.push_back({LogEntry::Kind::kBackward, party, round});
  return out;
}

void CheckProtocolLog(const std::vector<LogEntry>& log, int parties) {
  const std::size_t k = static_cast<std::size_t>(parties);
  if (log.size() % (2 * k) != 0) throw ProtocolError("log length is not a whole number of rounds");
  std::set<int> rounds;
  for (std::size_t start = 0; start < log.size(); start += 2 * k) {
    const int round = log[start].round;
    if (!rounds.insert(round).second) throw ProtocolError(RoundTag(round) + "appears twice");
    std::set<PartyId> fwd, bwd;
    for (std::size_t i = 0; i < 2 * k; ++i) {
      const LogEntry& e = log[start + i];
      if (e.round != round) throw ProtocolError(RoundTag(round) + "interleaved with another round");
      const bool forward_half = i < k;
      if ((e.kind == LogEntry::Kind::kForward) != forward_half) {
        throw ProtocolError(RoundTag(round) + "gradient before the full embedding set");
      }
      (forward_half ? fwd : bwd).insert(e.party);
    }
    if (fwd.size() != k || bwd.size() != k) {
      throw ProtocolError(RoundTag(round) + "party set incomplete or repeated");
    }
  }
}

PassportMeans SampleMeans(const Network& net, Rng& rng) {
  PassportMeans means;
  for (std::size_t slot : net.passport_slots()) {
    means[slot] = SampleChannelMeans(std::get<PassportLayer>(net.layers[slot]).config, rng);
  }
  return means;
}

PassportBindings SampleBindings(const Network& net, const PassportMeans& means, Index batch,
                                Rng& rng) {
  PassportBindings bindings;
  for (std::size_t slot : net.passport_slots()) {
    const PassportConfig& cfg = std::get<PassportLayer>(net.layers[slot]).config;
    const Index count = cfg.scope == PassportScope::kPerSample ? batch : 1;
    PassportBinding binding;
    binding.keys.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
      if (cfg.resample_means) {
        binding.keys.push_back(SamplePassport(cfg, rng));
      } else {
        auto it = means.find(slot);
        if (it == means.end()) {
          throw InvalidArgument("no channel means for passport slot " + std::to_string(slot));
        }
        binding.keys.push_back(SamplePassport(cfg, it->second, rng));
      }
    }
    bindings.emplace(slot, std::move(binding));
  }
  return bindings;
}

PassiveParty::PassiveParty(PartyId id, Tensor features, Network model, DefenseSpec defense,
                           std::uint64_t seed)
    : id_(id),
      features_(std::move(features)),
      model_(std::move(model)),
      defense_(std::move(defense)),
      rng_(Rng::Derive(seed, 1)),
      infer_rng_(Rng::Derive(seed, 2)) {
  if (features_.rank() < 2) throw ShapeError("features must be [records x ...]");
  ValidateDefense(defense_);
  means_ = SampleMeans(model_, rng_);
}

ForwardEmbedding PassiveParty::Forward(std::span<const Index> batch, int round) {
  if (round <= last_round_) {
    throw ProtocolError(RoundTag(round) + "party " + std::to_string(id_) +
                        " already forwarded this round");
  }
  for (Index i : batch) {
    if (i < 0 || i >= records()) {
      throw InvalidArgument("batch index " + std::to_string(i) + " outside " +
                            std::to_string(records()) + " records");
    }
  }
  last_round_ = round;
  const Tensor x = GatherRows(features_, batch);
  const PassportBindings bindings = SampleBindings(model_, means_, x.dim(0), rng_);
  ActivationTrace trace = fedpass::Forward(model_, x, bindings);
  Tensor h = trace.output();
  if (ActsOn(defense_, DefenseTarget::kEmbeddings)) h = ApplyTensorDefense(h, defense_, rng_);
  pending_[round] = {std::move(trace)};
  return {id_, round, std::vector<Index>(batch.begin(), batch.end()), std::move(h)};
}

void PassiveParty::Update(const BackwardGradient& grad, const SgdOptions& sgd) {
  if (grad.party != id_) {
    throw ProtocolError("party " + std::to_string(id_) + " received a gradient for party " +
                        std::to_string(grad.party));
  }
  auto it = pending_.find(grad.round);
  if (it == pending_.end()) {
    throw ProtocolError(RoundTag(grad.round) + "party " + std::to_string(id_) +
                        " has no retained trace");
  }
  if (grad.grad.shape() != it->second.trace.output().shape()) {
    throw ShapeError(RoundTag(grad.round) + "gradient " + ShapeString(grad.grad.shape()) +
                     " does not match embedding " +
                     ShapeString(it->second.trace.output().shape()));
  }
  const Gradients g = Backward(model_, it->second.trace, grad.grad);
  SgdStep(model_, g, sgd, sgd_state_);
  pending_.erase(it);
}

Tensor PassiveParty::Embed(const Tensor& x, bool as_sent) {
  const PassportBindings bindings = SampleBindings(model_, means_, x.dim(0), infer_rng_);
  Tensor h = Predict(model_, x, bindings);
  if (as_sent && ActsOn(defense_, DefenseTarget::kEmbeddings)) {
    h = ApplyTensorDefense(h, defense_, infer_rng_);
  }
  return h;
}

PublicModel PassiveParty::Public() const { return {model_, SampleShape(features_)}; }

StateInventory PassiveParty::Inspect() const {
  return {"id", "features", "model", "embedding_defense", "rng", "passport_means",
          "pending_traces", "optimizer_state"};
}

ActiveParty::ActiveParty(std::vector<int> labels, int classes, Network model,
                         DefenseSpec defense, std::uint64_t seed)
    : labels_(std::move(labels)),
      classes_(classes),
      model_(std::move(model)),
      defense_(std::move(defense)),
      rng_(Rng::Derive(seed, 1)),
      infer_rng_(Rng::Derive(seed, 2)) {
  if (classes_ < 2) throw InvalidArgument("need at least two classes");
  for (int y : labels_) {
    if (y < 0 || y >= classes_) throw InvalidArgument("label " + std::to_string(y) + " out of range");
  }
  ValidateDefense(defense_);
  means_ = SampleMeans(model_, rng_);
}

ActiveStep ActiveParty::Step(std::span<const ForwardEmbedding> embeddings, int parties,
                             const SgdOptions& sgd) {
  if (embeddings.empty()) throw ProtocolError("active step without embeddings");
  const int round = embeddings.front().round;
  std::vector<bool> present(static_cast<std::size_t>(parties), false);
  for (const ForwardEmbedding& e : embeddings) {
    if (e.party < 0 || e.party >= parties) {
      throw ProtocolError(RoundTag(round) + "embedding from unknown party " +
                          std::to_string(e.party));
    }
    present[static_cast<std::size_t>(e.party)] = true;
    if (e.round != round) throw ProtocolError(RoundTag(round) + "embeddings from mixed rounds");
    if (e.batch != embeddings.front().batch) {
      throw ProtocolError(RoundTag(round) + "parties embedded different batches");
    }
    if (e.h.shape() != embeddings.front().h.shape()) {
      throw ShapeError(RoundTag(round) + "embedding shapes differ across parties");
    }
  }
  for (PartyId p = 0; p < parties; ++p) {
    if (!present[static_cast<std::size_t>(p)]) {
      throw ProtocolError(RoundTag(round) + "missing embedding from party " + std::to_string(p));
    }
  }

  Tensor fused = embeddings.front().h;
  for (std::size_t k = 1; k < embeddings.size(); ++k) fused.vec() += embeddings[k].h.vec();
  const std::vector<Index>& batch = embeddings.front().batch;
  std::vector<int> y;
  y.reserve(batch.size());
  for (Index i : batch) {
    if (i < 0 || i >= static_cast<Index>(labels_.size())) {
      throw InvalidArgument("batch index " + std::to_string(i) + " has no label");
    }
    y.push_back(labels_[static_cast<std::size_t>(i)]);
  }

  const PassportBindings bindings = SampleBindings(model_, means_, fused.dim(0), rng_);
  const ActivationTrace trace = Forward(model_, fused, bindings);
  const LossAndGrad ce = CrossEntropyLoss(trace.output(), y);
  const Gradients g = Backward(model_, trace, ce.grad);
  SgdStep(model_, g, sgd, sgd_state_);

  ActiveStep out;
  out.loss = ce.loss;
  for (const ForwardEmbedding& e : embeddings) {
    Tensor grad = g.input;
    if (ActsOn(defense_, DefenseTarget::kGradients)) grad = ApplyTensorDefense(grad, defense_, rng_);
    out.grads.push_back({e.party, round, std::move(grad)});
  }
  std::sort(out.grads.begin(), out.grads.end(),
            [](const BackwardGradient& a, const BackwardGradient& b) { return a.party < b.party; });
  return out;
}

Tensor ActiveParty::Logits(const Tensor& fused) {
  return Predict(model_, fused, SampleBindings(model_, means_, fused.dim(0), infer_rng_));
}

StateInventory ActiveParty::Inspect() const {
  return {"labels", "classes", "model", "gradient_defense", "rng", "passport_means",
          "optimizer_state"};
}

void TrainingConfig::Validate(Index records) const {
  if (rounds < 0 || epochs < 0) throw InvalidArgument("rounds and epochs must be >= 0");
  if (batch_size < 1 || batch_size > records) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) + " not in [1, " +
                          std::to_string(records) + "]");
  }
  sgd().Validate();
  if (parties < 1) throw InvalidArgument("need at least one passive party");
}

int TrainingConfig::TotalRounds(Index records) const {
  if (epochs == 0) return rounds;
  return epochs * static_cast<int>((records + batch_size - 1) / batch_size);
}

BatchSchedule::BatchSchedule(Index records, int batch_size, std::uint64_t seed)
    : records_(records),
      batch_size_(batch_size),
      per_epoch_(static_cast<int>((records + batch_size - 1) / batch_size)),
      seed_(seed) {}

std::vector<Index> BatchSchedule::Batch(int round) {
  const int epoch = round / per_epoch_;
  if (epoch != epoch_) {
    Rng rng = Rng::Derive(seed_, static_cast<std::uint64_t>(epoch));
    order_ = rng.Permutation(records_);
    epoch_ = epoch;
  }
  const Index start = static_cast<Index>(round % per_epoch_) * batch_size_;
  const Index end = std::min(records_, start + batch_size_);
  return std::vector<Index>(order_.begin() + start, order_.begin() + end);
}

History Train(const TrainingConfig& config, Federation& fed, const EvalSet* eval) {
  const int k = static_cast<int>(fed.passive.size());
  if (k != config.parties || fed.transport.parties() != k) {
    throw InvalidArgument("configuration expects " + std::to_string(config.parties) +
                          " passive parties, federation has " + std::to_string(k));
  }
  const Index n = fed.passive.front().records();
  for (const PassiveParty& p : fed.passive) {
    if (p.records() != n) throw InvalidArgument("passive shards are not aligned");
  }
  if (static_cast<Index>(fed.active.labels().size()) != n) {
    throw InvalidArgument("label count does not match the aligned records");
  }
  config.Validate(n);

  History history;
  BatchSchedule schedule(n, config.batch_size, config.seed);
  const int total = config.TotalRounds(n);
  for (int round = 0; round < total; ++round) {
    const std::vector<Index> batch = schedule.Batch(round);
    for (PassiveParty& p : fed.passive) fed.transport.Send(p.Forward(batch, round));
    const std::vector<ForwardEmbedding> embeddings = fed.transport.CollectForward(round);
    ActiveStep step = fed.active.Step(embeddings, k, config.sgd());
    for (BackwardGradient& g : step.grads) fed.transport.Send(std::move(g));
    for (PassiveParty& p : fed.passive) {
      p.Update(fed.transport.CollectBackward(p.id(), round), config.sgd());
    }
    history.loss.push_back(step.loss);
    if (eval != nullptr && config.eval_every > 0 && (round + 1) % config.eval_every == 0 &&
        round + 1 != total) {
      history.accuracy.emplace_back(round + 1, Evaluate(fed, *eval));
    }
  }
  if (eval != nullptr) history.accuracy.emplace_back(total, Evaluate(fed, *eval));
  return history;
}

double Evaluate(Federation& fed, const EvalSet& eval, int batch_size) {
  if (eval.shards.size() != fed.passive.size()) {
    throw InvalidArgument("evaluation needs one shard per passive party");
  }
  const Index n = static_cast<Index>(eval.labels.size());
  if (n == 0) throw InvalidArgument("empty evaluation set");
  for (const Tensor& s : eval.shards) {
    if (s.dim(0) != n) throw InvalidArgument("evaluation shards are not aligned with labels");
  }
  Index correct = 0;
  std::vector<Index> idx;
  for (Index start = 0; start < n; start += batch_size) {
    idx.clear();
    for (Index i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
    Tensor fused = fed.passive[0].Embed(GatherRows(eval.shards[0], idx), true);
    for (std::size_t k = 1; k < fed.passive.size(); ++k) {
      fused.vec() += fed.passive[k].Embed(GatherRows(eval.shards[k], idx), true).vec();
    }
    const std::vector<int> pred = ArgmaxRows(fed.active.Logits(fused));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      correct += pred[i] == eval.labels[static_cast<std::size_t>(idx[i])];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<double> TrainCentralized(const TrainingConfig& config, Network& net,
                                     const Tensor& features, std::span<const int> labels) {
  const Index n = features.dim(0);
  if (static_cast<Index>(labels.size()) != n) throw InvalidArgument("label count mismatch");
  config.Validate(n);
  BatchSchedule schedule(n, config.batch_size, config.seed);
  std::vector<double> losses;
  SgdState state;
  const int total = config.TotalRounds(n);
  for (int round = 0; round < total; ++round) {
    const std::vector<Index> batch = schedule.Batch(round);
    std::vector<int> y;
    for (Index i : batch) y.push_back(labels[static_cast<std::size_t>(i)]);
    const ActivationTrace trace = Forward(net, GatherRows(features, batch));
    const LossAndGrad ce = CrossEntropyLoss(trace.output(), y);
    SgdStep(net, Backward(net, trace, ce.grad), config.sgd(), state);
    losses.push_back(ce.loss);
  }
  return losses;
}

}  // namespace fedpass
