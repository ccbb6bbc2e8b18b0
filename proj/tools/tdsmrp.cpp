// SPDX-License-Identifier: Apache-2.0
//
// tdsmrp: simulate cohorts, prepare splits, train TD and supervised
// candidates, sweep the state-to-state delay and evaluate.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tdsmrp/commands.hpp"
#include "tdsmrp/core.hpp"

namespace {

std::array<double, 3> parse_split(const std::string& text) {
  std::array<double, 3> out{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto comma = text.find(',', pos);
    if ((i < 2) != (comma != std::string::npos)) throw tdsmrp::InvalidInput("--split needs three fractions");
    const std::string item = text.substr(pos, i < 2 ? comma - pos : std::string::npos);
    try {
      std::size_t used = 0;
      out[static_cast<std::size_t>(i)] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw tdsmrp::InvalidInput("--split: malformed fraction '" + item + "'");
    }
    pos = comma + 1;
  }
  return out;
}

std::vector<double> parse_delays(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw tdsmrp::InvalidInput("--delays: malformed value '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void add_prepared(CLI::App* cmd, tdsmrp::PreparedData& data, const std::string& prefix = "") {
  cmd->add_option("--" + prefix + "dataset", data.dataset, "Dataset file")->required();
  cmd->add_option("--" + prefix + "stats", data.stats, "stats.json from prepare")->required();
  cmd->add_option("--" + prefix + "folds", data.folds, "folds.json from prepare")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TD value learning over irregular event sequences"};
  app.require_subcommand(1);

  tdsmrp::SimulateOptions sim;
  std::string shift;
  auto* simulate = app.add_subcommand("simulate", "Sample a synthetic cohort");
  simulate->add_option("config", sim.config, "Cohort config file")->required();
  simulate->add_option("--episodes", sim.episodes, "Number of episodes")->default_val(1000);
  simulate->add_option("--seed", sim.seed, "Random seed")->default_val(0);
  simulate->add_option("--shift", shift, "Shift config for an external-analog cohort");
  simulate->add_option("--out", sim.out, "Output dataset file")->required();

  tdsmrp::PrepareOptions prep;
  std::string split = "0.8,0.1,0.1";
  auto* prepare = app.add_subcommand("prepare", "Split patients and fit standardization");
  prepare->add_option("dataset", prep.dataset, "Dataset file")->required();
  prepare->add_option("--split", split, "train,validation,test fractions")->default_val(split);
  prepare->add_option("--seed", prep.seed, "Split seed")->default_val(0);
  prepare->add_option("--out", prep.out_dir, "Output directory")->required();

  tdsmrp::TrainOptions tr;
  std::string train_seeds;
  double train_delay = 0.0;
  std::string train_experiment;
  auto* train = app.add_subcommand("train", "Train one candidate for each seed");
  train->add_option("--mode", tr.mode, "td, sup1, sup3, sup7, sup14 or sup28")->required();
  train->add_flag("--balanced", tr.balanced, "Class-balanced cross-entropy");
  auto* delay_opt = train->add_option("--delay-x", train_delay, "State-to-state delay in hours");
  train->add_option("--seeds", train_seeds, "Seeds, e.g. 0..4 or 0,3");
  train->add_option("--config", train_experiment, "Experiment config file");
  add_prepared(train, tr.data);
  train->add_option("--out", tr.out_dir, "Output directory")->required();

  tdsmrp::SweepOptions sw;
  std::string delays = "4,16,24,48,72,120";
  std::uint64_t sweep_seed = 0;
  std::string sweep_experiment;
  auto* sweep = app.add_subcommand("sweep", "Train one TD model per delay and pick the best");
  sweep->add_option("--delays", delays, "Comma-separated delays in hours")->default_val(delays);
  auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "Training seed");
  sweep->add_option("--config", sweep_experiment, "Experiment config file");
  add_prepared(sweep, sw.data);
  sweep->add_option("--out", sw.out_dir, "Output directory")->required();

  tdsmrp::EvaluateOptions ev;
  std::string eval_experiment;
  auto* evaluate = app.add_subcommand("evaluate", "Score checkpoints on internal and shifted data");
  evaluate->add_option("--checkpoints", ev.checkpoints, "Directory or glob of <model>/seed<k>.ckpt")->required();
  add_prepared(evaluate, ev.internal);
  evaluate->add_option("--external", ev.external, "Shifted external-analog dataset")->required();
  evaluate->add_option("--eval-seed", ev.eval_seed, "Anchor sampling seed for evaluation");
  evaluate->add_option("--config", eval_experiment, "Experiment config file");
  evaluate->add_option("--out", ev.out_dir, "Output directory")->required();

  std::string fixture_name;
  std::string fixture_out;
  auto* fixture = app.add_subcommand("fixture", "Print a built-in cohort or shift config");
  fixture->add_option("name", fixture_name, "default, ladder3, single or external-shift")->required();
  fixture->add_option("--out", fixture_out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tdsmrp::kExitInvalidInput;
  }

  try {
    if (*simulate) {
      if (!shift.empty()) sim.shift = shift;
      return tdsmrp::cmd_simulate(sim);
    }
    if (*prepare) {
      prep.split = parse_split(split);
      return tdsmrp::cmd_prepare(prep);
    }
    if (*train) {
      if (!train_seeds.empty()) tr.seeds = tdsmrp::parse_seed_list(train_seeds);
      if (*delay_opt) tr.delay_x = train_delay;
      if (!train_experiment.empty()) tr.experiment = train_experiment;
      return tdsmrp::cmd_train(tr);
    }
    if (*sweep) {
      sw.delays = parse_delays(delays);
      if (*sweep_seed_opt) sw.seed = sweep_seed;
      if (!sweep_experiment.empty()) sw.experiment = sweep_experiment;
      return tdsmrp::cmd_sweep(sw);
    }
    if (*evaluate) {
      if (!eval_experiment.empty()) ev.experiment = eval_experiment;
      return tdsmrp::cmd_evaluate(ev);
    }
    if (*fixture) return tdsmrp::cmd_fixture(fixture_name, fixture_out);
  } catch (const tdsmrp::InvalidInput& e) {
    std::cerr << "tdsmrp: invalid input: " << e.what() << '\n';
    return tdsmrp::kExitInvalidInput;
  }
  return tdsmrp::kExitInvalidInput;
}
