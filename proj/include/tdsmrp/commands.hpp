// SPDX-License-Identifier: Apache-2.0
//
// The operator commands behind the tdsmrp binary. Each returns a process
// exit code: 0 ok, 2 invalid input, 3 training failure, 4 evaluation failure.

#ifndef TDSMRP_COMMANDS_HPP
#define TDSMRP_COMMANDS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tdsmrp {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidInput = 2,
  kExitTrainingFailure = 3,
  kExitEvaluationFailure = 4,
};

struct SimulateOptions {
  std::filesystem::path config;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> shift;
  std::filesystem::path out;
};
int cmd_simulate(const SimulateOptions& options);

struct PrepareOptions {
  std::filesystem::path dataset;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // receives stats.json, folds.json, prepare_manifest.json
};
int cmd_prepare(const PrepareOptions& options);

struct PreparedData {
  std::filesystem::path dataset;
  std::filesystem::path stats;
  std::filesystem::path folds;
};

struct TrainOptions {
  std::string mode = "td";  // td | sup1 | sup3 | sup7 | sup14 | sup28
  bool balanced = false;
  std::optional<double> delay_x;
  std::optional<std::vector<std::uint64_t>> seeds;
  PreparedData data;
  std::optional<std::filesystem::path> experiment;  // optional experiment config
  std::filesystem::path out_dir;  // checkpoints land in out_dir/<model>/seed<k>.ckpt
};
int cmd_train(const TrainOptions& options);

struct SweepOptions {
  std::vector<double> delays{4, 16, 24, 48, 72, 120};
  std::optional<std::uint64_t> seed;
  PreparedData data;
  std::optional<std::filesystem::path> experiment;
  std::filesystem::path out_dir;  // sweep.tsv, sweep.svg, sweep_manifest.json
};
int cmd_sweep(const SweepOptions& options);

struct EvaluateOptions {
  std::string checkpoints;  // directory or glob over <model>/seed<k>.ckpt files
  PreparedData internal;
  std::filesystem::path external;
  std::optional<std::filesystem::path> experiment;
  std::uint64_t eval_seed = 0x5eed;
  std::filesystem::path out_dir;
};
int cmd_evaluate(const EvaluateOptions& options);

/// Parses "0..4" or "0,2,5" into a seed list.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Writes the built-in cohort ("default", "ladder3", "single") or the default
/// external shift ("external-shift") in the config file format.
int cmd_fixture(const std::string& name, const std::filesystem::path& out);

}  // namespace tdsmrp

#endif  // TDSMRP_COMMANDS_HPP
