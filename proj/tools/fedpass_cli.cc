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

// Command-line entry point: train, sweep, attack, verify-theory, cap.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedpass/checkpoint.h"
#include "fedpass/errors.h"
#include "fedpass/experiment.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedpass {
namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  // train
  int grid = 0;
  int point = 0;
  // attack
  std::string checkpoint;
  std::string keys;
  std::vector<std::string> attacks;
  // verify-theory
  int trials = 100000;
  // cap
  std::string results;
};

ExperimentConfig LoadConfig(const Options& o) {
  ExperimentConfig cfg = ExperimentConfig::Load(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

json RowJson(const RunResult& r) {
  json j{{"defense", r.defense},       {"strength", r.strength},
         {"attack", r.attack},         {"seed", r.seed},
         {"main_accuracy", r.main_accuracy}, {"recovery_error", r.recovery_error},
         {"train_s", r.train_s},       {"attack_s", r.attack_s}};
  if (r.failed()) j["error"] = r.error;
  return j;
}

int RunTrain(const Options& o) {
  const ExperimentConfig cfg = LoadConfig(o);
  if (o.grid < 0 || o.grid >= static_cast<int>(cfg.defense_grids.size())) {
    throw InvalidArgument("--grid out of range");
  }
  const std::vector<DefenseSpec> points = cfg.defense_grids[o.grid].Expand();
  if (o.point < 0 || o.point >= static_cast<int>(points.size())) {
    throw InvalidArgument("--point out of range");
  }
  const DefenseSpec& defense = points[o.point];
  const std::uint64_t seed = cfg.seeds.front();
  const PreparedData data = PrepareData(cfg);

  TrainedRun run = TrainGridPoint(cfg, data, defense, seed);
  const Federation& fed = run.fed;

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  Checkpoint ckpt{defense, seed, {}, fed.active.model(), cfg.ToJson()};
  KeyFile keys{{}, fed.active.passport_means()};
  for (const PassiveParty& p : fed.passive) {
    ckpt.passive.push_back(p.model());
    keys.passive.push_back(p.passport_means());
  }
  SaveCheckpoint((dir / "model.json").string(), ckpt);
  SaveKeys((dir / "keys.json").string(), keys);
  std::cout << json{{"defense", DefenseLabel(defense)},
                    {"strength", DefenseStrength(defense)},
                    {"seed", seed},
                    {"main_accuracy", run.main_accuracy},
                    {"train_s", run.train_s},
                    {"checkpoint", (dir / "model.json").string()},
                    {"keys", (dir / "keys.json").string()}}
                   .dump(1)
            << "\n";
  return 0;
}

int RunSweep(const Options& o) {
  const ExperimentConfig cfg = LoadConfig(o);
  const std::vector<RunResult> rows = RunExperiment(cfg, o.jobs);
  WriteResults(rows, cfg.output_dir);
  std::vector<std::string> warnings;
  const std::vector<CapRow> table = CapTable(ReadResults(cfg.output_dir), &warnings);
  std::ofstream(fs::path(cfg.output_dir) / "cap.csv") << CapCsv(table);
  int failed = 0;
  for (const RunResult& r : rows) {
    if (r.failed()) {
      ++failed;
      std::cerr << "failed: " << r.defense << " " << r.strength << " " << r.attack << " seed "
                << r.seed << ": " << r.error << "\n";
    }
  }
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << ToCsv(rows) << "\n" << CapCsv(table);
  return failed == 0 ? 0 : 3;
}

int RunAttack(const Options& o) {
  const Checkpoint ckpt = LoadCheckpoint(o.checkpoint);
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig::FromJson(ckpt.experiment)
                                          : ExperimentConfig::Load(o.config);
  if (!o.attacks.empty()) {
    cfg.attacks.clear();
    for (const std::string& a : o.attacks) cfg.attacks.push_back(ParseAttack(a));
  }
  const std::uint64_t seed = o.seed.value_or(ckpt.seed);
  const PreparedData data = PrepareData(cfg);
  if (ckpt.passive.size() != static_cast<std::size_t>(cfg.parties)) {
    throw FormatError("checkpoint has " + std::to_string(ckpt.passive.size()) +
                      " passive models, config expects " + std::to_string(cfg.parties));
  }
  Federation fed = BuildFederation(cfg, data, ckpt.defense, ckpt.seed);
  for (std::size_t k = 0; k < ckpt.passive.size(); ++k) {
    fed.passive[k].mutable_model() = ckpt.passive[k];
  }
  fed.active.mutable_model() = ckpt.active;
  // Without the key file the parties draw fresh channel means, which models
  // an owner who lost its keys.
  if (!o.keys.empty()) {
    KeyFile keys = LoadKeys(o.keys);
    if (keys.passive.size() != fed.passive.size()) throw FormatError("key file party count");
    for (std::size_t k = 0; k < keys.passive.size(); ++k) {
      fed.passive[k].set_passport_means(std::move(keys.passive[k]));
    }
    fed.active.set_passport_means(std::move(keys.active));
  }
  const double accuracy = Evaluate(fed, EvalSet{data.test_shards, data.test_labels});
  const std::vector<RunResult> rows =
      AttackFederation(cfg, data, fed, ckpt.defense, seed, accuracy, 0.0);
  json out = json::array();
  bool ok = true;
  for (const RunResult& r : rows) {
    out.push_back(RowJson(r));
    ok = ok && !r.failed();
  }
  std::cout << out.dump(1) << "\n";
  if (!o.out.empty()) WriteResults(rows, o.out);
  return ok ? 0 : 3;
}

int RunVerifyTheory(const Options& o) {
  const json report = VerifyTheory(o.seed.value_or(0), o.trials);
  std::cout << report.dump(1) << "\n";
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "theory.json") << report.dump(1) << "\n";
  }
  return report.at("pass").get<bool>() ? 0 : 4;
}

int RunCap(const Options& o) {
  std::string dir = o.results;
  if (dir.empty() && !o.config.empty()) dir = ExperimentConfig::Load(o.config).output_dir;
  if (dir.empty()) dir = "results";
  const std::vector<RunResult> rows = ReadResults(dir);
  if (rows.empty()) throw InvalidArgument("no results in '" + dir + "'");
  std::vector<std::string> warnings;
  const std::string csv = CapCsv(CapTable(rows, &warnings));
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << csv;
  const std::string out = o.out.empty() ? dir : o.out;
  fs::create_directories(out);
  std::ofstream(fs::path(out) / "cap.csv") << csv;
  return 0;
}

}  // namespace
}  // namespace fedpass

int main(int argc, char** argv) {
  using namespace fedpass;
  Options o;
  CLI::App app{"FedPass split-learning experiments"};
  app.require_subcommand(1);

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { o.seed = s; }, "Seed (overrides the config's seeds)");
  };

  CLI::App* train = app.add_subcommand("train", "Train one grid point and save a checkpoint");
  train->add_option("--config", o.config, "Experiment config (JSON)")->required();
  add_seed(train);
  train->add_option("--out", o.out, "Directory for model.json and keys.json");
  train->add_option("--grid", o.grid, "Index into defense_grids");
  train->add_option("--point", o.point, "Index into that grid's strengths");

  CLI::App* sweep = app.add_subcommand("sweep", "Run every grid point and write results");
  sweep->add_option("--config", o.config, "Experiment config (JSON)")->required();
  add_seed(sweep);
  sweep->add_option("--jobs", o.jobs, "Parallel grid points")->check(CLI::PositiveNumber);
  sweep->add_option("--out", o.out, "Results directory (overrides output_dir)");

  CLI::App* attack = app.add_subcommand("attack", "Attack a saved model");
  attack->add_option("--checkpoint", o.checkpoint, "model.json from train")->required();
  attack->add_option("--keys", o.keys, "keys.json from train");
  attack->add_option("--config", o.config, "Override the config stored in the checkpoint");
  attack->add_option("--attack", o.attacks, "cafe, mi or pmc (repeatable)");
  add_seed(attack);
  attack->add_option("--out", o.out, "Merge rows into this results directory");

  CLI::App* theory = app.add_subcommand("verify-theory", "Check the linear privacy analysis");
  add_seed(theory);
  theory->add_option("--trials", o.trials, "Monte Carlo trials per cell")
      ->check(CLI::PositiveNumber);
  theory->add_option("--out", o.out, "Directory for theory.json");

  CLI::App* cap = app.add_subcommand("cap", "Aggregate results into a CAP table");
  cap->add_option("--results", o.results, "Results directory");
  cap->add_option("--config", o.config, "Use the config's output_dir");
  cap->add_option("--out", o.out, "Directory for cap.csv (default: the results directory)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return RunTrain(o);
    if (*sweep) return RunSweep(o);
    if (*attack) return RunAttack(o);
    if (*theory) return RunVerifyTheory(o);
    if (*cap) return RunCap(o);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
