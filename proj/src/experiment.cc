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

#include "fedpass/experiment.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "fedpass/checkpoint.h"
#include "fedpass/errors.h"
#include "fedpass/metrics.h"
#include "fedpass/theory.h"

#ifndef FEDPASS_DEFAULT_DATA_DIR
#define FEDPASS_DEFAULT_DATA_DIR "data/mnist-subset"
#endif

namespace fedpass {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream labels for Rng::Derive. None depends on the defense.
enum Stream : std::uint64_t {
  kModelStream = 1,
  kBatchStream = 2,
  kActiveStream = 3,
  kAttackPickStream = 4,
  kProbePickStream = 5,
  kAuxPickStream = 6,
  kShadowStream = 7,
  kAttackSeedStream = 8,
  kSynthStream = 9,
  kPassiveStream = 100,  // + party id
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::uint64_t StreamSeed(std::uint64_t seed, std::uint64_t stream) {
  return Rng::Derive(seed, stream).NextU64();
}

std::vector<Index> PickRecords(Index total, Index count, std::uint64_t seed, Stream stream) {
  Rng rng = Rng::Derive(seed, stream);
  std::vector<Index> order = rng.Permutation(total);
  order.resize(static_cast<std::size_t>(std::min(count, total)));
  return order;
}

template <class T>
T Get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
  }
}

void RejectUnknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) ==
        known.end()) {
      throw InvalidArgument(std::string("unknown key '") + key + "' in " + where);
    }
  }
}

PassportScope ParseScope(const std::string& s) {
  if (s == "per_batch") return PassportScope::kPerBatch;
  if (s == "per_sample") return PassportScope::kPerSample;
  throw InvalidArgument("unknown passport scope '" + s + "'");
}

std::string ScopeName(PassportScope s) {
  return s == PassportScope::kPerSample ? "per_sample" : "per_batch";
}

std::string DataDir(const DatasetConfig& d) {
  if (!d.path.empty()) return d.path;
  if (const char* env = std::getenv("FEDPASS_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return FEDPASS_DEFAULT_DATA_DIR;
}

std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json NumberOrNull(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double NumberFrom(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

std::optional<PassportConfig> PassportsFor(const DefenseSpec& defense) {
  const auto* f = std::get_if<FedPassDefense>(&defense);
  if (f == nullptr) return std::nullopt;
  PassportConfig cfg;
  cfg.range = f->range;
  cfg.sigma2 = f->sigma2;
  cfg.scope = f->scope;
  return cfg;
}

Shape SampleShape(const Tensor& shard) {
  return Shape(shard.shape().begin() + 1, shard.shape().end());
}

RunResult BaseRow(const DefenseSpec& defense, std::uint64_t seed) {
  RunResult r;
  r.defense = DefenseLabel(defense);
  r.strength = DefenseStrength(defense);
  r.seed = seed;
  return r;
}

}  // namespace

std::string DefenseLabel(const DefenseSpec& defense) {
  std::string label = DefenseName(defense);
  if (const auto* f = std::get_if<FedPassDefense>(&defense)) {
    if (f->scope != PassportScope::kPerBatch) label += ":" + ScopeName(f->scope);
    if (f->sigma2 != 1.0) label += ":sigma2=" + FormatDouble(f->sigma2);
  } else if (const auto* g = std::get_if<GaussianNoiseDefense>(&defense)) {
    if (g->target != DefenseTarget::kEmbeddings) label += ":" + TargetName(g->target);
  } else if (const auto* sp = std::get_if<SparsifyDefense>(&defense)) {
    if (sp->target != DefenseTarget::kGradients) label += ":" + TargetName(sp->target);
  }
  return label;
}

TrainingConfig DeskTraining() {
  TrainingConfig t;
  t.epochs = 20;
  t.batch_size = 64;
  t.lr = 1e-2;
  t.weight_decay = 4e-5;
  t.momentum = 0.9;
  t.parties = 2;
  return t;
}

std::string AttackName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kCafe:
      return "cafe";
    case AttackKind::kMi:
      return "mi";
    case AttackKind::kPmc:
      return "pmc";
  }
  return "?";
}

AttackKind ParseAttack(const std::string& name) {
  if (name == "cafe") return AttackKind::kCafe;
  if (name == "mi") return AttackKind::kMi;
  if (name == "pmc") return AttackKind::kPmc;
  throw InvalidArgument("unknown attack '" + name + "'");
}

std::vector<DefenseSpec> DefenseGridConfig::Expand() const {
  if (variant == "none") return {NoDefense{}};
  if (strengths.empty()) {
    throw InvalidArgument("defense grid '" + variant + "' has no strengths");
  }
  DefenseSpec base = MakeDefense(variant, strengths.front(), target, sigma2);
  if (auto* f = std::get_if<FedPassDefense>(&base)) f->scope = scope;
  std::vector<DefenseSpec> grid = DefenseGrid(base, strengths);
  for (const DefenseSpec& spec : grid) ValidateDefense(spec);
  return grid;
}

// ---- Config ----

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
  RejectUnknown(j,
                {"dataset", "arch", "parties", "split", "training", "defense_grids", "attacks",
                 "attack_cfg", "aux_size", "attack_samples", "probe_size", "seeds",
                 "output_dir"},
                "config");
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    RejectUnknown(d,
                  {"kind", "path", "train_subset", "test_subset", "n", "dims", "classes",
                   "blob_sep"},
                  "dataset");
    const std::string kind = Get<std::string>(d, "kind", "mnist");
    if (kind == "mnist") {
      cfg.dataset.kind = DatasetConfig::Kind::kMnist;
    } else if (kind == "synthetic") {
      cfg.dataset.kind = DatasetConfig::Kind::kSynthetic;
    } else {
      throw InvalidArgument("unknown dataset kind '" + kind + "'");
    }
    cfg.dataset.path = Get<std::string>(d, "path", "");
    cfg.dataset.train_subset = Get<Index>(d, "train_subset", cfg.dataset.train_subset);
    cfg.dataset.test_subset = Get<Index>(d, "test_subset", cfg.dataset.test_subset);
    cfg.dataset.synth.n = Get<Index>(d, "n", cfg.dataset.synth.n);
    cfg.dataset.synth.dims = Get<Index>(d, "dims", cfg.dataset.synth.dims);
    cfg.dataset.synth.classes = Get<int>(d, "classes", cfg.dataset.synth.classes);
    cfg.dataset.synth.blob_sep = Get<double>(d, "blob_sep", cfg.dataset.synth.blob_sep);
  }
  if (j.contains("arch")) {
    const json& a = j.at("arch");
    RejectUnknown(a, {"kind", "dims", "head_hidden"}, "arch");
    cfg.arch = ArchSpec::Parse(Get<std::string>(a, "kind", "mlp"),
                               Get<std::vector<Index>>(a, "dims", {}));
    cfg.arch.head_hidden = Get<Index>(a, "head_hidden", cfg.arch.head_hidden);
  }
  cfg.parties = Get<int>(j, "parties", cfg.parties);
  cfg.split = Get<std::string>(j, "split", cfg.split);
  if (j.contains("training")) {
    const json& t = j.at("training");
    RejectUnknown(t,
                  {"epochs", "rounds", "batch_size", "lr", "weight_decay", "momentum",
                   "clip_norm", "eval_every"},
                  "training");
    TrainingConfig& tc = cfg.training;
    tc.epochs = Get<int>(t, "epochs", tc.epochs);
    tc.rounds = Get<int>(t, "rounds", tc.rounds);
    if (t.contains("rounds") && !t.contains("epochs")) tc.epochs = 0;
    tc.batch_size = Get<int>(t, "batch_size", tc.batch_size);
    tc.lr = Get<double>(t, "lr", tc.lr);
    tc.weight_decay = Get<double>(t, "weight_decay", tc.weight_decay);
    tc.momentum = Get<double>(t, "momentum", tc.momentum);
    tc.clip_norm = Get<double>(t, "clip_norm", tc.clip_norm);
    tc.eval_every = Get<int>(t, "eval_every", tc.eval_every);
  }
  cfg.training.parties = cfg.parties;
  if (j.contains("defense_grids")) {
    for (const json& g : j.at("defense_grids")) {
      RejectUnknown(g, {"variant", "strengths", "sigma2", "scope", "target"}, "defense_grids");
      DefenseGridConfig grid;
      grid.variant = Get<std::string>(g, "variant", grid.variant);
      grid.strengths = Get<std::vector<double>>(g, "strengths", {});
      grid.sigma2 = Get<double>(g, "sigma2", grid.sigma2);
      grid.scope = ParseScope(Get<std::string>(g, "scope", "per_batch"));
      grid.target = ParseTarget(Get<std::string>(g, "target", "embeddings"));
      cfg.defense_grids.push_back(std::move(grid));
    }
  }
  if (j.contains("attacks")) {
    cfg.attacks.clear();
    for (const std::string& name : Get<std::vector<std::string>>(j, "attacks", {})) {
      cfg.attacks.push_back(ParseAttack(name));
    }
  }
  if (j.contains("attack_cfg")) {
    const json& a = j.at("attack_cfg");
    RejectUnknown(a,
                  {"iterations", "step_size", "tv_lambda", "restarts", "seed", "init_stddev",
                   "optimize_passports", "shadow_iterations", "pmc_iterations"},
                  "attack_cfg");
    AttackConfig& ac = cfg.attack_cfg;
    ac.iterations = Get<int>(a, "iterations", ac.iterations);
    ac.step_size = Get<double>(a, "step_size", ac.step_size);
    ac.tv_lambda = Get<double>(a, "tv_lambda", ac.tv_lambda);
    ac.restarts = Get<int>(a, "restarts", ac.restarts);
    ac.seed = Get<std::uint64_t>(a, "seed", ac.seed);
    ac.init_stddev = Get<double>(a, "init_stddev", ac.init_stddev);
    ac.optimize_passports = Get<bool>(a, "optimize_passports", ac.optimize_passports);
    ac.shadow_iterations = Get<int>(a, "shadow_iterations", ac.shadow_iterations);
    ac.pmc_iterations = Get<int>(a, "pmc_iterations", ac.pmc_iterations);
  }
  cfg.aux_size = Get<Index>(j, "aux_size", cfg.aux_size);
  cfg.attack_samples = Get<Index>(j, "attack_samples", cfg.attack_samples);
  cfg.probe_size = Get<Index>(j, "probe_size", cfg.probe_size);
  cfg.seeds = Get<std::vector<std::uint64_t>>(j, "seeds", {});
  cfg.output_dir = Get<std::string>(j, "output_dir", cfg.output_dir);
  cfg.Validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw FormatError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return FromJson(j);
}

json ExperimentConfig::ToJson() const {
  json j;
  if (dataset.kind == DatasetConfig::Kind::kMnist) {
    j["dataset"] = {{"kind", "mnist"},
                    {"path", dataset.path},
                    {"train_subset", dataset.train_subset},
                    {"test_subset", dataset.test_subset}};
  } else {
    j["dataset"] = {{"kind", "synthetic"},
                    {"n", dataset.synth.n},
                    {"dims", dataset.synth.dims},
                    {"classes", dataset.synth.classes},
                    {"blob_sep", dataset.synth.blob_sep}};
  }
  j["arch"] = {{"kind", arch.name()}, {"dims", arch.mlp_dims}, {"head_hidden", arch.head_hidden}};
  j["parties"] = parties;
  j["split"] = split;
  j["training"] = {{"epochs", training.epochs},         {"rounds", training.rounds},
                   {"batch_size", training.batch_size}, {"lr", training.lr},
                   {"weight_decay", training.weight_decay}, {"momentum", training.momentum},
                   {"clip_norm", training.clip_norm},   {"eval_every", training.eval_every}};
  j["defense_grids"] = json::array();
  for (const DefenseGridConfig& g : defense_grids) {
    j["defense_grids"].push_back({{"variant", g.variant},
                                  {"strengths", g.strengths},
                                  {"sigma2", g.sigma2},
                                  {"scope", ScopeName(g.scope)},
                                  {"target", TargetName(g.target)}});
  }
  j["attacks"] = json::array();
  for (AttackKind a : attacks) j["attacks"].push_back(AttackName(a));
  j["attack_cfg"] = {{"iterations", attack_cfg.iterations},
                     {"step_size", attack_cfg.step_size},
                     {"tv_lambda", attack_cfg.tv_lambda},
                     {"restarts", attack_cfg.restarts},
                     {"seed", attack_cfg.seed},
                     {"init_stddev", attack_cfg.init_stddev},
                     {"optimize_passports", attack_cfg.optimize_passports},
                     {"shadow_iterations", attack_cfg.shadow_iterations},
                     {"pmc_iterations", attack_cfg.pmc_iterations}};
  j["aux_size"] = aux_size;
  j["attack_samples"] = attack_samples;
  j["probe_size"] = probe_size;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  return j;
}

void ExperimentConfig::Validate() const {
  if (defense_grids.empty()) throw InvalidArgument("defense_grids must not be empty");
  for (const DefenseGridConfig& g : defense_grids) g.Expand();
  if (seeds.empty()) throw InvalidArgument("seeds must not be empty");
  if (parties < 1) throw InvalidArgument("parties must be >= 1");
  if (split != "columns") throw InvalidArgument("unknown split rule '" + split + "'");
  if (dataset.kind == DatasetConfig::Kind::kMnist &&
      (dataset.train_subset < 1 || dataset.test_subset < 1)) {
    throw InvalidArgument("train_subset and test_subset must be >= 1");
  }
  if (dataset.kind == DatasetConfig::Kind::kSynthetic &&
      (dataset.synth.n < 10 || dataset.synth.dims < 1 || dataset.synth.classes < 2)) {
    throw InvalidArgument("synthetic dataset needs n >= 10, dims >= 1 and classes >= 2");
  }
  if (aux_size < 1) throw InvalidArgument("aux_size must be >= 1");
  if (attack_samples < 1) throw InvalidArgument("attack_samples must be >= 1");
  if (probe_size < 1) throw InvalidArgument("probe_size must be >= 1");
  attack_cfg.Validate();
  TrainingConfig t = training;
  t.parties = parties;
  t.Validate(std::max<Index>(1, t.batch_size));
}

// ---- Data and federation ----

PreparedData PrepareData(const ExperimentConfig& cfg) {
  Dataset train, test;
  if (cfg.dataset.kind == DatasetConfig::Kind::kMnist) {
    const std::filesystem::path dir = DataDir(cfg.dataset);
    train = LoadMnistIdx((dir / "train-images-idx3-ubyte").string(),
                         (dir / "train-labels-idx1-ubyte").string())
                .Head(cfg.dataset.train_subset);
    test = LoadMnistIdx((dir / "t10k-images-idx3-ubyte").string(),
                        (dir / "t10k-labels-idx1-ubyte").string())
               .Head(cfg.dataset.test_subset);
  } else {
    Rng rng = Rng::Derive(0, kSynthStream);
    const Dataset all = SynthDataset(cfg.dataset.synth, rng);
    const Index n_test = (all.size() + 4) / 5;
    const Index n_train = all.size() - n_test;
    std::vector<Index> head(static_cast<std::size_t>(n_train)), tail(static_cast<std::size_t>(n_test));
    for (Index i = 0; i < n_train; ++i) head[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < n_test; ++i) tail[static_cast<std::size_t>(i)] = n_train + i;
    train = {GatherRows(all.features, head),
             std::vector<int>(all.labels.begin(), all.labels.begin() + n_train)};
    test = {GatherRows(all.features, tail),
            std::vector<int>(all.labels.begin() + n_train, all.labels.end())};
  }
  PreparedData data;
  data.train_shards = VerticalSplit(train.features, cfg.parties);
  data.test_shards = VerticalSplit(test.features, cfg.parties);
  data.train_labels = std::move(train.labels);
  data.test_labels = std::move(test.labels);
  int max_label = 0;
  for (int y : data.train_labels) max_label = std::max(max_label, y);
  for (int y : data.test_labels) max_label = std::max(max_label, y);
  data.classes = cfg.dataset.kind == DatasetConfig::Kind::kSynthetic ? cfg.dataset.synth.classes
                                                                     : max_label + 1;
  return data;
}

Federation BuildFederation(const ExperimentConfig& cfg, const PreparedData& data,
                           const DefenseSpec& defense, std::uint64_t seed) {
  ValidateDefense(defense);
  const std::optional<PassportConfig> passports = PassportsFor(defense);
  Rng model_rng = Rng::Derive(seed, kModelStream);
  std::vector<PassiveParty> passive;
  for (int k = 0; k < cfg.parties; ++k) {
    const Tensor& shard = data.train_shards[static_cast<std::size_t>(k)];
    const Shape sample = SampleShape(shard);
    ArchSpec arch = cfg.arch;
    // The mlp input width is each party's own feature count.
    if (arch.kind == ArchSpec::Kind::kMlp) arch.mlp_dims.front() = NumElements(sample);
    passive.emplace_back(k, shard, BuildPassiveModel(arch, sample, passports, model_rng), defense,
                         StreamSeed(seed, kPassiveStream + static_cast<std::uint64_t>(k)));
  }
  ActiveParty active(data.train_labels, data.classes,
                     BuildActiveModel(cfg.arch, data.classes, passports, model_rng), defense,
                     StreamSeed(seed, kActiveStream));
  return {std::move(passive), std::move(active), Transport(cfg.parties)};
}

// ---- Runs ----

std::vector<RunResult> AttackFederation(const ExperimentConfig& cfg, const PreparedData& data,
                                        Federation& fed, const DefenseSpec& defense,
                                        std::uint64_t seed, double main_accuracy,
                                        double train_s) {
  std::vector<RunResult> rows;
  AttackConfig acfg = cfg.attack_cfg;
  acfg.seed = StreamSeed(seed ^ cfg.attack_cfg.seed, kAttackSeedStream);
  const Tensor& train_x = data.train_shards.front();
  const Tensor& test_x = data.test_shards.front();
  const std::vector<Index> picks =
      PickRecords(test_x.dim(0), cfg.attack_samples, seed, kAttackPickStream);
  const Tensor target_x = GatherRows(test_x, picks);

  for (AttackKind kind : cfg.attacks) {
    RunResult row = BaseRow(defense, seed);
    row.attack = AttackName(kind);
    row.main_accuracy = main_accuracy;
    row.train_s = train_s;
    const auto start = Clock::now();
    try {
      // Each attack sees the victim in the same state, so a row does not
      // depend on which other attacks ran before it.
      PassiveParty victim = fed.passive.front();
      std::optional<Tensor> target_h;
      if (kind != AttackKind::kPmc) target_h = victim.Embed(target_x, true);
      switch (kind) {
        case AttackKind::kCafe: {
          const InversionResult inv = CafeInvert(victim.Public(), *target_h, acfg);
          row.recovery_error = MseRecoveryError(target_x, inv.x_hat);
          break;
        }
        case AttackKind::kMi: {
          const std::vector<Index> probes =
              PickRecords(train_x.dim(0), cfg.probe_size, seed, kProbePickStream);
          const Tensor probe_x = GatherRows(train_x, probes);
          const Tensor probe_h = victim.Embed(probe_x, true);
          Rng shadow_rng = Rng::Derive(seed, kShadowStream);
          const MiResult mi = MiBlackbox(ShadowSkeleton(victim.model(), shadow_rng), probe_x,
                                         probe_h, *target_h, acfg);
          row.recovery_error = MseRecoveryError(target_x, mi.inversion.x_hat);
          break;
        }
        case AttackKind::kPmc: {
          // The attacker is the victim party itself, completing its own model.
          const std::vector<Index> aux =
              PickRecords(train_x.dim(0), cfg.aux_size, seed, kAuxPickStream);
          std::vector<int> aux_y;
          for (Index i : aux) aux_y.push_back(data.train_labels[static_cast<std::size_t>(i)]);
          const Tensor aux_h = victim.Embed(GatherRows(train_x, aux), false);
          const Tensor test_h = victim.Embed(test_x, false);
          row.recovery_error =
              PmcAttack(aux_h, aux_y, test_h, data.test_labels, data.classes, acfg).label_error;
          break;
        }
      }
    } catch (const std::exception& e) {
      row.recovery_error = kNaN;
      row.error = e.what();
    }
    row.attack_s = Seconds(start);
    rows.push_back(std::move(row));
  }
  if (cfg.attacks.empty()) {
    RunResult row = BaseRow(defense, seed);
    row.attack = "none";
    row.main_accuracy = main_accuracy;
    row.recovery_error = kNaN;
    row.train_s = train_s;
    rows.push_back(std::move(row));
  }
  return rows;
}

TrainedRun TrainGridPoint(const ExperimentConfig& cfg, const PreparedData& data,
                          const DefenseSpec& defense, std::uint64_t seed) {
  const auto start = Clock::now();
  Federation fed = BuildFederation(cfg, data, defense, seed);
  TrainingConfig tc = cfg.training;
  tc.parties = cfg.parties;
  tc.seed = StreamSeed(seed, kBatchStream);
  Train(tc, fed);
  const double accuracy = Evaluate(fed, EvalSet{data.test_shards, data.test_labels});
  return {std::move(fed), accuracy, Seconds(start)};
}

std::vector<RunResult> RunGridPoint(const ExperimentConfig& cfg, const PreparedData& data,
                                    const DefenseSpec& defense, std::uint64_t seed) {
  const auto start = Clock::now();
  try {
    TrainedRun run = TrainGridPoint(cfg, data, defense, seed);
    return AttackFederation(cfg, data, run.fed, defense, seed, run.main_accuracy, run.train_s);
  } catch (const std::exception& e) {
    std::vector<RunResult> rows;
    std::vector<std::string> names;
    for (AttackKind a : cfg.attacks) names.push_back(AttackName(a));
    if (names.empty()) names.push_back("none");
    for (const std::string& name : names) {
      RunResult row = BaseRow(defense, seed);
      row.attack = name;
      row.main_accuracy = kNaN;
      row.recovery_error = kNaN;
      row.train_s = Seconds(start);
      row.error = e.what();
      rows.push_back(std::move(row));
    }
    return rows;
  }
}

std::vector<RunResult> RunExperiment(const ExperimentConfig& cfg, int jobs) {
  cfg.Validate();
  struct Point {
    DefenseSpec defense;
    std::uint64_t seed;
  };
  std::vector<Point> points;
  for (const DefenseGridConfig& g : cfg.defense_grids) {
    for (const DefenseSpec& spec : g.Expand()) {
      for (std::uint64_t seed : cfg.seeds) points.push_back({spec, seed});
    }
  }
  if (points.empty()) throw InvalidArgument("experiment grid is empty");
  const PreparedData data = PrepareData(cfg);

  std::vector<std::vector<RunResult>> slots(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      slots[i] = RunGridPoint(cfg, data, points[i].defense, points[i].seed);
    }
  };
  const int threads = std::clamp<int>(jobs, 1, static_cast<int>(points.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  std::vector<RunResult> rows;
  for (auto& slot : slots) {
    for (RunResult& r : slot) rows.push_back(std::move(r));
  }
  return rows;
}

// ---- Persistence ----

RowKey KeyOf(const RunResult& r) { return {r.defense, r.strength, r.attack, r.seed}; }

namespace {

json RowToJson(const RunResult& r) {
  json j{{"defense", r.defense},
         {"strength", r.strength},
         {"attack", r.attack},
         {"seed", r.seed},
         {"main_accuracy", NumberOrNull(r.main_accuracy)},
         {"recovery_error", NumberOrNull(r.recovery_error)},
         {"train_s", r.train_s},
         {"attack_s", r.attack_s}};
  if (r.failed()) j["error"] = r.error;
  return j;
}

RunResult RowFromJson(const json& j) {
  RunResult r;
  r.defense = j.at("defense").get<std::string>();
  r.strength = j.at("strength").get<double>();
  r.attack = j.at("attack").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.main_accuracy = NumberFrom(j.at("main_accuracy"));
  r.recovery_error = NumberFrom(j.at("recovery_error"));
  r.train_s = j.value("train_s", 0.0);
  r.attack_s = j.value("attack_s", 0.0);
  r.error = j.value("error", "");
  return r;
}

}  // namespace

std::string ToCsv(const std::vector<RunResult>& rows) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const RunResult& r : rows) {
    out << r.defense << ',' << FormatDouble(r.strength) << ',' << r.attack << ',' << r.seed << ','
        << FormatDouble(r.main_accuracy) << ',' << FormatDouble(r.recovery_error) << ','
        << FormatDouble(r.train_s) << ',' << FormatDouble(r.attack_s) << '\n';
  }
  return out.str();
}

std::vector<RunResult> ReadResults(const std::string& dir) {
  const std::filesystem::path path = std::filesystem::path(dir) / "results.json";
  if (!std::filesystem::exists(path)) return {};
  std::ifstream in(path);
  std::vector<RunResult> rows;
  try {
    const json j = json::parse(in);
    for (const json& r : j.at("rows")) rows.push_back(RowFromJson(r));
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "' is not a results file: " + e.what());
  }
  return rows;
}

void WriteResults(const std::vector<RunResult>& rows, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<RunResult> merged = ReadResults(dir);
  std::map<RowKey, std::size_t> index;
  for (std::size_t i = 0; i < merged.size(); ++i) index[KeyOf(merged[i])] = i;
  for (const RunResult& r : rows) {
    const auto it = index.find(KeyOf(r));
    if (it != index.end()) {
      merged[it->second] = r;
    } else {
      index[KeyOf(r)] = merged.size();
      merged.push_back(r);
    }
  }
  json j{{"columns", kCsvHeader}, {"rows", json::array()}};
  for (const RunResult& r : merged) j["rows"].push_back(RowToJson(r));
  const std::filesystem::path base(dir);
  // Write to temporaries and rename so a crash never leaves half a file.
  const auto write = [&](const std::string& name, const std::string& text) {
    const std::filesystem::path tmp = base / (name + ".tmp");
    {
      std::ofstream out(tmp);
      if (!out) throw Error("cannot write '" + tmp.string() + "'");
      out << text;
    }
    std::filesystem::rename(tmp, base / name);
  };
  write("results.json", j.dump(1) + "\n");
  write("results.csv", ToCsv(merged));
}

// ---- CAP ----

std::vector<CapRow> CapTable(const std::vector<RunResult>& rows,
                             std::vector<std::string>* warnings) {
  using Group = std::pair<std::string, std::string>;
  std::vector<Group> order;
  // group -> seed -> strength -> (accuracy, error); a later duplicate wins.
  std::map<Group, std::map<std::uint64_t, std::map<double, CapSetting>>> groups;
  for (const RunResult& r : rows) {
    if (r.attack == "none") continue;
    const Group g{r.defense, r.attack};
    if (!groups.contains(g)) {
      order.push_back(g);
      groups[g];
    }
    if (r.failed() || !std::isfinite(r.main_accuracy) || !std::isfinite(r.recovery_error)) {
      continue;
    }
    groups[g][r.seed][r.strength] = {r.main_accuracy, r.recovery_error};
  }
  std::vector<CapRow> table;
  for (const Group& g : order) {
    const auto& seeds = groups[g];
    if (seeds.empty()) {
      if (warnings != nullptr) {
        warnings->push_back(g.first + "/" + g.second + ": no successful rows, omitted");
      }
      continue;
    }
    std::vector<double> caps;
    for (const auto& [seed, by_strength] : seeds) {
      std::vector<CapSetting> settings;
      for (const auto& [strength, s] : by_strength) settings.push_back(s);
      caps.push_back(Cap(settings));
    }
    CapRow row{g.first, g.second, 0.0, 0.0, static_cast<int>(caps.size())};
    for (double c : caps) row.cap_mean += c;
    row.cap_mean /= static_cast<double>(caps.size());
    if (caps.size() > 1) {
      double ss = 0.0;
      for (double c : caps) ss += (c - row.cap_mean) * (c - row.cap_mean);
      row.cap_std = std::sqrt(ss / static_cast<double>(caps.size() - 1));
    }
    table.push_back(row);
  }
  return table;
}

std::string CapCsv(const std::vector<CapRow>& table) {
  std::ostringstream out;
  out << "defense,attack,cap_mean,cap_std,seeds\n";
  for (const CapRow& r : table) {
    out << r.defense << ',' << r.attack << ',' << FormatDouble(r.cap_mean) << ','
        << FormatDouble(r.cap_std) << ',' << r.seeds << '\n';
  }
  return out.str();
}

// ---- Theory report ----

json VerifyTheory(std::uint64_t seed, int mc_trials) {
  json report;
  Rng rng = Rng::Derive(seed, 0);
  auto uniform_vector = [&](Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.Uniform(lo, hi);
    return v;
  };

  {
    const int instances = 100;
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
      const LinearInstance inst =
          RandomLinearInstance(4, 4 + t % 3, 0, PassportSite::kBetaOnly, 10, 1, rng);
      const GuessCheck c = BetaGuessCheck(inst, uniform_vector(4, -10, 0));
      worst = std::max(worst, std::abs(c.actual - c.predicted));
    }
    report["beta_equality"] = {{"instances", instances}, {"input_dim", 4}, {"hidden_dim", "4..6"},
                             {"N", 10},                {"sigma2", 1},
                             {"max_abs_gap", worst},   {"tolerance", 1e-8},
                             {"pass", worst < 1e-8}};
  }
  {
    const int instances = 100;
    double worst_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < instances; ++t) {
      const LinearInstance inst =
          RandomLinearInstance(3, 3, 0, PassportSite::kGammaOnly, 10, 1, rng);
      const GuessCheck c = GammaGuessCheck(inst, uniform_vector(3, -10, 0));
      worst_slack = std::min(worst_slack, c.actual - c.predicted);
    }
    report["gamma_inequality"] = {{"instances", instances},
                              {"dim", 3},
                              {"N", 10},
                              {"sigma2", 1},
                              {"min_actual_minus_bound", worst_slack},
                              {"pass", worst_slack >= -1e-9}};
  }
  {
    json cells = json::array();
    bool pass = true;
    for (int m : {2, 3}) {
      for (double n : {2.0, 5.0}) {
        for (double eps : {0.2, 0.5}) {
          const LinearInstance inst =
              RandomLinearInstance(m, m + 1, 0, PassportSite::kBetaOnly, n, 1, rng);
          const double p = RecoveryMonteCarlo(inst, eps, n, mc_trials, rng);
          const double bound = RecoveryBound(m, eps, n);
          const double margin = 3.0 * std::sqrt(p * (1.0 - p) / mc_trials);
          const bool ok = p <= bound + margin;
          pass = pass && ok;
          cells.push_back({{"m", m}, {"N", n}, {"eps", eps}, {"empirical", p},
                           {"bound", bound}, {"margin", margin}, {"pass", ok}});
        }
      }
    }
    report["recovery_probability"] = {{"trials", mc_trials}, {"cells", cells}, {"pass", pass}};
  }
  {
    const int instances = 50;
    double worst = std::numeric_limits<double>::infinity();
    for (int t = 0; t < instances; ++t) {
      const int n_a = 2 + t % 4;
      Eigen::MatrixXd w_a(3, 4);
      for (Index i = 0; i < w_a.size(); ++i) w_a.data()[i] = rng.Normal(0, 1);
      const Eigen::VectorXd h = uniform_vector(4, -1, 1);
      std::vector<Eigen::VectorXd> hs(static_cast<std::size_t>(n_a), h), ss;
      for (int i = 0; i < n_a; ++i) ss.push_back(uniform_vector(4, -5, 0));
      const LabelBoundResult r = LabelBoundCheck(MakeLabelRecoveryInstance(w_a, hs, ss));
      worst = std::min(worst, r.oracle_min_error - r.pairwise_bound);
    }
    report["label_bound"] = {{"instances", instances},
                          {"n_a", "2..5"},
                          {"min_oracle_minus_bound", worst},
                          {"pass", worst >= -1e-6}};
  }
  {
    const int instances = 20;
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
      const int n_a = 2 + t % 4;
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
      std::vector<Eigen::VectorXd> hs(static_cast<std::size_t>(n_a), ones), ss;
      for (int i = 0; i < n_a; ++i) ss.push_back(uniform_vector(3, -5, 0));
      const LabelBoundResult r =
          LabelBoundCheck(MakeLabelRecoveryInstance(Eigen::MatrixXd::Identity(3, 3), hs, ss));
      worst = std::max(worst, std::abs(r.pairwise_bound - IdentityCaseBound(ss)));
    }
    report["identity_case"] = {{"instances", instances},
                       {"max_abs_gap", worst},
                       {"tolerance", 1e-8},
                       {"pass", worst < 1e-8}};
  }
  bool all = true;
  for (const auto& [name, section] : report.items()) all = all && section.at("pass").get<bool>();
  report["pass"] = all;
  return report;
}

}  // namespace fedpass
