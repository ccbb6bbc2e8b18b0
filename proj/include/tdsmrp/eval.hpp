// SPDX-License-Identifier: Apache-2.0
//
// Discrimination metrics and the statistics used to compare candidates.

#ifndef TDSMRP_EVAL_HPP
#define TDSMRP_EVAL_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tdsmrp/model.hpp"
#include "tdsmrp/pipeline.hpp"

namespace tdsmrp {

class EvaluationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// P(score of a random positive > score of a random negative), ties 1/2.
/// Throws InvalidInput unless both classes are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct PairedTest {
  double t = 0.0;
  double p = 0.5;
  bool degenerate = false;  // zero-variance differences with nonzero mean
};

/// One-tailed paired Student t-test of mean(a) > mean(b).
PairedTest paired_t_one_tailed(std::span<const double> a, std::span<const double> b);

struct AdjustedPValues {
  std::vector<double> adjusted;
  std::vector<bool> rejected;
};

/// Benjamini-Yekutieli step-up adjustment at level q.
AdjustedPValues benjamini_yekutieli(std::span<const double> p_values, double q = 0.05);

/// Trained checkpoints of one candidate, one per seed.
struct ModelRuns {
  std::string label;
  bool is_td = false;
  std::vector<std::uint64_t> seeds;
  std::vector<ValueModel<double>> models;
};

struct EvalDataset {
  std::string name;
  std::span<const Sample> samples;
  std::optional<Eigen::VectorXd> oracle;  // absorption probability per latent state
};

struct GridCell {
  std::string model;
  std::string dataset;
  double horizon_days = 0.0;
  std::vector<double> per_seed;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds; 0 for one seed
};

struct Comparison {
  std::string baseline;
  std::string dataset;
  double horizon_days = 0.0;
  double t = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  bool degenerate = false;
};

struct OracleMetrics {
  std::string dataset;
  std::string model;
  std::vector<double> mae;        // per seed
  std::vector<double> max_error;  // per seed
};

struct EvalReport {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  std::vector<std::uint64_t> seeds;
  std::vector<GridCell> grid;  // dataset-major, then model, then horizon
  std::vector<Comparison> comparisons;  // empty unless >= 2 seeds
  std::vector<OracleMetrics> oracle;

  const GridCell& cell(const std::string& model, const std::string& dataset,
                       double horizon_days) const;
};

/// Scores every sample once per model and seed, aggregates AUROC over seeds,
/// and tests the TD candidate against every baseline with one BY family.
/// Throws EvaluationFailure when seed sets differ or a checkpoint is missing.
EvalReport evaluate_all(std::span<const ModelRuns> runs, std::span<const EvalDataset> datasets);

/// Per-sample absolute error of predictions against the oracle value of the
/// latent state at each anchor.
struct OracleError {
  double mae = 0.0;
  double max_error = 0.0;
};
OracleError oracle_error(std::span<const double> predictions, std::span<const Sample> samples,
                         const Eigen::VectorXd& oracle);

}  // namespace tdsmrp

#endif  // TDSMRP_EVAL_HPP
