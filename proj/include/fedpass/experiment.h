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

// Experiment orchestration: defense grids x seeds, each trained through the
// split-learning protocol and attacked with CAFE, MI and PMC, with results
// persisted as CSV and JSON.
//
// Configs are JSON. Keys (all optional except where noted):
//
//   dataset        {"kind": "mnist", "path", "train_subset", "test_subset"} or
//                  {"kind": "synthetic", "n", "dims", "classes", "blob_sep"};
//                  an empty mnist path means FEDPASS_DATA_DIR, then the build
//                  default
//   arch           {"kind": "mlp" | "lenet_lite", "dims": [...], "head_hidden"}
//   parties        K
//   split          "columns" (the only rule)
//   training       {"epochs", "rounds", "batch_size", "lr", "weight_decay",
//                   "momentum", "clip_norm"}
//   defense_grids  (required) [{"variant", "strengths": [...], "sigma2",
//                   "scope", "target"}]
//   attacks        subset of ["cafe", "mi", "pmc"]
//   attack_cfg     {"iterations", "step_size", "tv_lambda", "restarts",
//                   "init_stddev", "optimize_passports", "shadow_iterations",
//                   "pmc_iterations"}
//   aux_size       n_a for PMC
//   attack_samples records inverted by CAFE and MI
//   probe_size     probe queries available to MI
//   seeds          (required) non-empty list
//   output_dir

#ifndef FEDPASS_EXPERIMENT_H_
#define FEDPASS_EXPERIMENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedpass/attacks.h"
#include "fedpass/data.h"
#include "fedpass/defenses.h"
#include "fedpass/models.h"
#include "fedpass/protocol.h"

namespace fedpass {

struct DatasetConfig {
  enum class Kind { kMnist, kSynthetic };
  Kind kind = Kind::kMnist;
  std::string path;
  Index train_subset = 2000;
  Index test_subset = 1000;
  SynthSpec synth;  // Synthetic: the last fifth of the n records is the test set.
};

struct DefenseGridConfig {
  std::string variant = "none";
  std::vector<double> strengths;  // Ignored for "none".
  double sigma2 = 1.0;
  PassportScope scope = PassportScope::kPerBatch;
  DefenseTarget target = DefenseTarget::kEmbeddings;

  std::vector<DefenseSpec> Expand() const;
};

// Desk defaults: 20 epochs, batch 64, lr 1e-2, weight decay 4e-5,
// momentum 0.9, two parties.
TrainingConfig DeskTraining();

enum class AttackKind { kCafe, kMi, kPmc };
std::string AttackName(AttackKind kind);
AttackKind ParseAttack(const std::string& name);

struct ExperimentConfig {
  DatasetConfig dataset;
  ArchSpec arch;
  int parties = 2;
  std::string split = "columns";
  TrainingConfig training = DeskTraining();
  std::vector<DefenseGridConfig> defense_grids;
  std::vector<AttackKind> attacks{AttackKind::kCafe, AttackKind::kMi, AttackKind::kPmc};
  AttackConfig attack_cfg;
  Index aux_size = 40;
  Index attack_samples = 8;
  Index probe_size = 200;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "results";

  static ExperimentConfig FromJson(const nlohmann::json& j);
  static ExperimentConfig Load(const std::string& path);
  nlohmann::json ToJson() const;
  // Throws InvalidArgument naming the offending key.
  void Validate() const;
};

struct RunResult {
  std::string defense;
  double strength = 0.0;
  std::string attack;
  std::uint64_t seed = 0;
  double main_accuracy = 0.0;
  double recovery_error = 0.0;  // MSE for cafe/mi, label error for pmc.
  double train_s = 0.0;
  double attack_s = 0.0;
  std::string error;            // Non-empty for failed runs; metrics are NaN.

  bool failed() const { return !error.empty(); }
};

// Row label of a defense: its name, qualified with any setting other than the
// variant's default sigma2, scope or target so that grids differing only in
// those settings never share a key. E.g. "fedpass:per_sample:sigma2=5".
std::string DefenseLabel(const DefenseSpec& defense);

struct RowKey {
  std::string defense;
  double strength;
  std::string attack;
  std::uint64_t seed;
  auto operator<=>(const RowKey&) const = default;
};
RowKey KeyOf(const RunResult& r);

// Dataset ready for vertical training: shards per party for train and test.
struct PreparedData {
  std::vector<Tensor> train_shards;
  std::vector<int> train_labels;
  std::vector<Tensor> test_shards;
  std::vector<int> test_labels;
  int classes = 0;
};

PreparedData PrepareData(const ExperimentConfig& cfg);

// Builds the federation for one defense and seed. Model weights, batch order
// and attack samples come from seed-derived streams that do not depend on the
// defense.
Federation BuildFederation(const ExperimentConfig& cfg, const PreparedData& data,
                           const DefenseSpec& defense, std::uint64_t seed);

struct TrainedRun {
  Federation fed;
  double main_accuracy;
  double train_s;
};

// Builds, trains and evaluates one grid point.
TrainedRun TrainGridPoint(const ExperimentConfig& cfg, const PreparedData& data,
                          const DefenseSpec& defense, std::uint64_t seed);

// Trains, evaluates and attacks one grid point; one row per attack (a single
// "none" row when no attack is configured). Exceptions become error rows.
std::vector<RunResult> RunGridPoint(const ExperimentConfig& cfg, const PreparedData& data,
                                    const DefenseSpec& defense, std::uint64_t seed);

// Attacks an already trained federation.
std::vector<RunResult> AttackFederation(const ExperimentConfig& cfg, const PreparedData& data,
                                        Federation& fed, const DefenseSpec& defense,
                                        std::uint64_t seed, double main_accuracy,
                                        double train_s);

// Runs every (defense, strength, seed) point on up to `jobs` threads. Rows
// come back in grid order whatever the number of jobs. Throws
// InvalidArgument for an empty grid.
std::vector<RunResult> RunExperiment(const ExperimentConfig& cfg, int jobs = 1);

// Merges `rows` into <dir>/results.json and rewrites <dir>/results.csv from
// it; a rerun replaces rows with the same (defense, strength, attack, seed).
void WriteResults(const std::vector<RunResult>& rows, const std::string& dir);
std::vector<RunResult> ReadResults(const std::string& dir);

inline constexpr const char* kCsvHeader =
    "defense,strength,attack,seed,main_accuracy,recovery_error,train_s,attack_s";
std::string ToCsv(const std::vector<RunResult>& rows);

struct CapRow {
  std::string defense;
  std::string attack;
  double cap_mean = 0.0;
  double cap_std = 0.0;  // Sample standard deviation over seeds; 0 for one seed.
  int seeds = 0;
};

// Per (defense, attack): CAP over the strengths of each seed, then mean and
// standard deviation across seeds. Error rows are skipped; groups left empty
// are omitted and reported in `warnings`.
std::vector<CapRow> CapTable(const std::vector<RunResult>& rows,
                             std::vector<std::string>* warnings = nullptr);
std::string CapCsv(const std::vector<CapRow>& table);

// Numerical checks of the linear privacy analysis, one JSON section per
// result with instance parameters, computed values and pass/fail.
nlohmann::json VerifyTheory(std::uint64_t seed, int mc_trials = 100000);

}  // namespace fedpass

#endif  // FEDPASS_EXPERIMENT_H_
