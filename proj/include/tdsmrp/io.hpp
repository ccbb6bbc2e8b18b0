// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats: episode datasets (line-delimited JSON), cohort and shift
// configs (sectioned key/value text), standardization stats and fold maps
// (JSON), checkpoints (binary) and run manifests.

#ifndef TDSMRP_IO_HPP
#define TDSMRP_IO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tdsmrp/core.hpp"
#include "tdsmrp/model.hpp"
#include "tdsmrp/pipeline.hpp"
#include "tdsmrp/simulator.hpp"
#include "tdsmrp/training.hpp"

namespace tdsmrp {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct Dataset {
  FeatureRegistry registry;
  std::vector<Episode> episodes;
  // Absorption probability per latent state, present for simulated cohorts.
  std::optional<Eigen::VectorXd> oracle;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

void write_dataset(std::ostream& out, const Dataset& dataset);
/// Throws InvalidInput with the offending line number on malformed input.
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// Sectioned key/value text, one level deep. Keys keep file order.
struct ConfigFile {
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(const std::string& key) const;
  };
  std::vector<Section> sections;

  const Section* find(const std::string& name) const;
};

ConfigFile parse_config(std::istream& in);
ConfigFile load_config(const std::filesystem::path& path);

CohortConfig cohort_from_config(const ConfigFile& file);
void write_cohort_config(std::ostream& out, const CohortConfig& config);
ShiftSpec shift_from_config(const ConfigFile& file, const FeatureRegistry& registry);
void write_shift_config(std::ostream& out, const ShiftSpec& shift, const FeatureRegistry& registry);

/// Experiment settings read from an optional config file; unset keys keep
/// the TrainConfig defaults.
struct ExperimentConfig {
  TrainConfig train;
  // Seeds are filled in by the command that uses them.
  AnchorSampling train_sampling = AnchorSampling::thinned(0.05, 0);
  AnchorSampling eval_sampling = AnchorSampling::thinned(0.05, 0);
};
ExperimentConfig experiment_from_config(const ConfigFile& file);

void write_stats(std::ostream& out, const StandardizationStats& stats);
StandardizationStats read_stats(std::istream& in);
void save_stats(const std::filesystem::path& path, const StandardizationStats& stats);
StandardizationStats load_stats(const std::filesystem::path& path);

/// Patient to fold map. Splits are rebuilt by matching patient ids.
struct FoldIndex {
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::vector<std::pair<std::int64_t, Fold>> patients;  // ascending patient id

  Split split_for(const std::vector<Episode>& episodes) const;
  friend bool operator==(const FoldIndex&, const FoldIndex&) = default;
};
FoldIndex make_fold_index(const std::vector<Episode>& episodes, const Split& split,
                          std::uint64_t seed, std::array<double, 3> fractions);
void save_folds(const std::filesystem::path& path, const FoldIndex& folds);
FoldIndex load_folds(const std::filesystem::path& path);

void write_checkpoint(std::ostream& out, const ValueModel<double>& model);
ValueModel<double> read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ValueModel<double>& model);
ValueModel<double> load_checkpoint(const std::filesystem::path& path);

/// One JSON object per line: {seed, epoch, train_loss, val_metric, wall_time}.
void write_training_log(std::ostream& out, const std::vector<EpochLog>& log);

/// 64-bit FNV-1a of a file's bytes.
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::filesystem::path> datasets;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<std::filesystem::path> outputs;
  std::string tool_version = kToolVersion;
  std::string wall_clock;
};

/// Writes the manifest with a hash for every referenced file.
void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);
/// Empty when every referenced file exists and matches its recorded hash,
/// otherwise one message per problem.
std::vector<std::string> verify_manifest(const std::filesystem::path& path);

}  // namespace tdsmrp

#endif  // TDSMRP_IO_HPP
