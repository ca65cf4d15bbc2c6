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


// Split learning between K passive parties (features) and one active party
// (labels). Each round the passive parties send forward embeddings H_k, the
// active party sums them, runs its top model, updates itself and returns
// dL/dH_k, and each passive party back-propagates through its bottom model.
//
// Everything runs in process over a FIFO transport with a sequential
// scheduler, so a run is a pure function of its configuration and seed.

#ifndef FEDPASS_PROTOCOL_H_
#define FEDPASS_PROTOCOL_H_

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedpass/defenses.h"
#include "fedpass/network.h"
#include "fedpass/random.h"
#include "fedpass/tensor.h"

namespace fedpass {

using PartyId = int;

// Intersection of the parties' record ids in ascending order. Stand-in for a
// private set intersection protocol; no privacy is provided.
std::vector<std::int64_t> AlignRecords(const std::vector<std::vector<std::int64_t>>& id_lists);

struct ForwardEmbedding {
  PartyId party = 0;
  int round = 0;
  std::vector<Index> batch;
  Tensor h;
};

struct BackwardGradient {
  PartyId party = 0;
  int round = 0;
  Tensor grad;
};

using Message = std::variant<ForwardEmbedding, BackwardGradient>;

struct LogEntry {
  enum class Kind { kForward, kBackward };
  Kind kind;
  PartyId party;
  int round;
};

// Test-only perturbations of delivery.
struct FaultInjector {
  bool reorder = false;                      // Shuffle delivery within a round.
  std::optional<PartyId> drop_forward_from;  // Silently lose this party's embeddings.
  std::uint64_t seed = 0;
};

// In-process message queues. Enforces exactly-once delivery per (sender,
// round) and refuses a gradient for a round whose embeddings have not all
// been collected.
class Transport {
 public:
  explicit Transport(int parties, FaultInjector faults = {});

  void Send(Message message);

  // Blocks (in the sequential scheduler: checks) until all K embeddings of
  // `round` are present, and returns them ordered by party id. Throws
  // ProtocolError naming the first absent party.
  std::vector<ForwardEmbedding> CollectForward(int round);
  BackwardGradient CollectBackward(PartyId party, int round);

  int parties() const { return parties_; }
  const std::vector<LogEntry>& log() const { return log_; }

 private:
  int parties_;
  FaultInjector faults_;
  Rng fault_rng_;
  std::deque<ForwardEmbedding> forward_;
  std::deque<BackwardGradient> backward_;
  std::set<int> collected_rounds_;
  std::set<std::pair<PartyId, int>> forward_seen_;
  std::set<std::pair<PartyId, int>> backward_seen_;
  std::vector<LogEntry> log_;
};

// Throws ProtocolError unless every round in `log` consists of exactly K
// forward entries followed by exactly K backward entries.
void CheckProtocolLog(const std::vector<LogEntry>& log, int parties);

// Field names held by a party, for information-boundary assertions.
using StateInventory = std::vector<std::string>;

// Channel means of one party's passports, one list per passport slot.
using PassportMeans = std::map<std::size_t, std::vector<double>>;

// Draws a binding per passport slot of `net`: one key per batch or one per
// sample according to each slot's scope. Keys are sampled around `means`,
// or with fresh means when the slot's config asks for it.
PassportBindings SampleBindings(const Network& net, const PassportMeans& means, Index batch,
                                Rng& rng);
PassportMeans SampleMeans(const Network& net, Rng& rng);

// Keyless copy of a bottom model: what a white-box attacker may know.
struct PublicModel {
  Network net;
  Shape input_shape;  // Per-sample input shape.
};

class PassiveParty {
 public:
  PassiveParty(PartyId id, Tensor features, Network model, DefenseSpec defense,
               std::uint64_t seed);

  PartyId id() const { return id_; }
  Index records() const { return features_.dim(0); }
  const Tensor& features() const { return features_; }
  const Network& model() const { return model_; }
  Network& mutable_model() { return model_; }

  // Embeds the batch with freshly sampled passports, applies any embedding
  // defense and retains the trace for the matching Update. A round can be
  // forwarded only once.
  ForwardEmbedding Forward(std::span<const Index> batch, int round);
  // Chain rule through the retained trace, then SGD. Discards the trace.
  void Update(const BackwardGradient& grad, const SgdOptions& sgd);

  // Inference path on arbitrary inputs: fresh passports; the embedding
  // defense is applied when `as_sent` is true.
  Tensor Embed(const Tensor& x, bool as_sent);

  PublicModel Public() const;
  StateInventory Inspect() const;
  const PassportMeans& passport_means() const { return means_; }
  void set_passport_means(PassportMeans means) { means_ = std::move(means); }

 private:
  struct Pending {
    ActivationTrace trace;
  };

  PartyId id_;
  Tensor features_;
  Network model_;
  DefenseSpec defense_;
  Rng rng_;        // Training-round passports and defense noise.
  Rng infer_rng_;  // Inference-path passports, so evaluation never shifts training.
  PassportMeans means_;
  std::map<int, Pending> pending_;
  int last_round_ = -1;
  SgdState sgd_state_;
};

struct ActiveStep {
  double loss = 0.0;
  std::vector<BackwardGradient> grads;  // One per party, in party order.
};

class ActiveParty {
 public:
  ActiveParty(std::vector<int> labels, int classes, Network model, DefenseSpec defense,
              std::uint64_t seed);

  // Sums the K embeddings, evaluates the top model with fresh passports,
  // takes one SGD step on it and returns dL/dH_k for every party. The
  // gradient is computed before the update.
  ActiveStep Step(std::span<const ForwardEmbedding> embeddings, int parties,
                  const SgdOptions& sgd);

  // Logits for a fused embedding, fresh passports.
  Tensor Logits(const Tensor& fused);

  int classes() const { return classes_; }
  const std::vector<int>& labels() const { return labels_; }
  const Network& model() const { return model_; }
  Network& mutable_model() { return model_; }
  StateInventory Inspect() const;
  const PassportMeans& passport_means() const { return means_; }
  void set_passport_means(PassportMeans means) { means_ = std::move(means); }

 private:
  std::vector<int> labels_;
  int classes_;
  Network model_;
  DefenseSpec defense_;
  Rng rng_;
  Rng infer_rng_;
  PassportMeans means_;
  SgdState sgd_state_;
};

struct TrainingConfig {
  int rounds = 0;       // Mini-batch rounds; overridden by epochs when > 0.
  int epochs = 0;
  int batch_size = 64;
  double lr = 1e-2;
  double weight_decay = 4e-5;
  double momentum = 0.9;
  double clip_norm = 0.0;  // Per-party gradient norm cap; 0 disables.
  int parties = 2;
  std::uint64_t seed = 0;
  int eval_every = 0;   // Rounds between test evaluations; 0 evaluates only at the end.

  void Validate(Index records) const;
  int TotalRounds(Index records) const;
  SgdOptions sgd() const { return {lr, weight_decay, momentum, clip_norm}; }
};

// Record order shared by every party: a fresh permutation per epoch, cut
// into consecutive batches (the last one may be short).
class BatchSchedule {
 public:
  BatchSchedule(Index records, int batch_size, std::uint64_t seed);
  std::vector<Index> Batch(int round);
  int batches_per_epoch() const { return per_epoch_; }

 private:
  Index records_;
  int batch_size_;
  int per_epoch_;
  std::uint64_t seed_;
  int epoch_ = -1;
  std::vector<Index> order_;
};

struct Federation {
  std::vector<PassiveParty> passive;
  ActiveParty active;
  Transport transport;
};

struct EvalSet {
  std::vector<Tensor> shards;  // One per passive party, aligned.
  std::vector<int> labels;
};

struct History {
  std::vector<double> loss;  // Per round.
  std::vector<std::pair<int, double>> accuracy;  // (round, test accuracy)
};

// Runs the three-step loop for the configured number of rounds.
History Train(const TrainingConfig& config, Federation& fed, const EvalSet* eval = nullptr);

// Argmax accuracy of the joint inference path over `eval`, in batches.
double Evaluate(Federation& fed, const EvalSet& eval, int batch_size = 256);

// Trains an unsplit network with the same batch schedule and update rule;
// the reference for split-learning equivalence.
std::vector<double> TrainCentralized(const TrainingConfig& config, Network& net,
                                     const Tensor& features, std::span<const int> labels);

}  // namespace fedpass

#endif  // FEDPASS_PROTOCOL_H_
