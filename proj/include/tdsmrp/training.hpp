// SPDX-License-Identifier: Apache-2.0
//
// Candidate trainers: TD with a soft-synchronized target network and the
// supervised fixed-horizon baselines, sharing loss, optimizer and epoch
// selection.

#ifndef TDSMRP_TRAINING_HPP
#define TDSMRP_TRAINING_HPP

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

/// Raised when a seed diverges; carries diagnostics in what().
class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrainMode { td, supervised };

enum class Precision { single, double_ };

struct TrainConfig {
  TrainMode mode = TrainMode::td;
  double horizon_days = 28.0;  // supervised label horizon; TD validation horizon
  bool balanced = false;
  double delay_x = 24.0;
  double alpha = 0.99;
  int max_epochs = 10;
  std::size_t batch_size = 256;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double gamma = 1.0;  // per hour of interval k
  std::optional<double> learning_rate;  // default 1 / n_params
  std::optional<double> weight_decay;   // default 1 / (lr * n_batches)
  Precision precision = Precision::single;
  ModelConfig model;
};

/// Throws InvalidInput on out-of-range fields.
void validate(const TrainConfig& config);

/// "td24", "sup1", "sup28b", ...: the model name used in reports and paths.
std::string model_label(const TrainConfig& config);

/// Parses a model label back into mode/horizon/balanced/delay fields of `base`.
TrainConfig parse_model_label(const std::string& label, TrainConfig base = {});

/// Terminal: the reward. Otherwise gamma^k times the target network's risk at
/// the next state; the caller evaluates `next_value` without gradients.
double td_target(const TransitionSample& sample, double next_value, double gamma = 1.0);

template <typename Scalar>
double td_target(const TransitionSample& sample, const ValueModel<Scalar>& target,
                 double gamma = 1.0) {
  if (sample.terminal()) return td_target(sample, 0.0, gamma);
  return td_target(sample, static_cast<double>(target.forward(*sample.next)), gamma);
}

/// Observed mortality within `horizon_days` of the window's anchor.
double supervised_target(const ObservationWindow& window, const Episode& episode,
                         double horizon_days);

/// Mean weighted binary cross-entropy; predictions are clamped to
/// [1e-7, 1-1e-7] and the number of clamped entries is reported.
struct BceResult {
  double loss = 0.0;
  std::size_t clamped = 0;
};
BceResult weighted_bce(std::span<const double> pred, std::span<const double> target,
                       const ClassWeights& weights);

template <typename Scalar>
struct OptimizerState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector m;
  Vector v;
  std::int64_t step = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  OptimizerState() = default;
  OptimizerState(Eigen::Index n, double lr, double wd)
      : m(Vector::Zero(n)), v(Vector::Zero(n)), learning_rate(lr), weight_decay(wd) {}
};

/// lr = 1/n_params.
double default_learning_rate(std::size_t n_params);
/// wd = 1/(lr * n_batches_per_epoch).
double default_weight_decay(double learning_rate, std::size_t batches_per_epoch);

/// One AdamW step with decoupled weight decay. Throws TrainingFailure on a
/// non-finite gradient.
template <typename Scalar>
void optimizer_step(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& theta,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad,
                    OptimizerState<Scalar>& state) {
  if (theta.size() != grad.size() || theta.size() != state.m.size())
    throw InvalidInput("optimizer_step: shape mismatch");
  if (!grad.allFinite()) throw TrainingFailure("optimizer_step: non-finite gradient");
  ++state.step;
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const auto c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const auto c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const auto lr = static_cast<Scalar>(state.learning_rate);
  const auto decay = static_cast<Scalar>(state.learning_rate * state.weight_decay);
  const auto eps = static_cast<Scalar>(state.epsilon);
  theta.array() -= lr * (state.m.array() * c1) / ((state.v.array() * c2).sqrt() + eps) +
                   decay * theta.array();
}

struct EpochLog {
  std::uint64_t seed = 0;
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_metric = 0.0;
  double wall_time = 0.0;  // seconds since the seed started
};

struct SeedResult {
  std::uint64_t seed = 0;
  ValueModel<double> model;  // best-validation epoch
  int best_epoch = 0;
  double best_val_metric = 0.0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::vector<EpochLog> log;
};

/// Trains one seed. TD samples must carry next-state windows. The validation
/// metric is the AUROC at config.horizon_days.
SeedResult train_seed(const TrainConfig& config, std::uint64_t seed,
                      std::span<const Sample> train, std::span<const Sample> validation);

/// All seeds of config.seeds, in order.
std::vector<SeedResult> train(const TrainConfig& config, std::span<const Sample> train,
                              std::span<const Sample> validation);

struct SweepRow {
  double delay_x = 0.0;
  std::array<double, kHorizonsDays.size()> val_auroc{};
  bool selected = false;
};

/// Inputs shared by every delay of a sweep; samples are rebuilt per delay.
struct SweepData {
  std::span<const Episode> episodes;
  const FeatureRegistry* registry = nullptr;
  const StandardizationStats* stats = nullptr;
  const Split* split = nullptr;
  AnchorSampling train_sampling;
  AnchorSampling validation_sampling;
};

/// One TD model per delay (first seed of base.seeds). The row with the best
/// 28-day validation AUROC is selected; ties go to the smallest delay.
std::vector<SweepRow> sweep_delay(const TrainConfig& base, std::span<const double> delays,
                                  const SweepData& data);

struct TabularTransition {
  int state = 0;
  std::optional<int> next_state;  // nullopt is terminal
  double reward = 0.0;
};

struct TabularTdConfig {
  double alpha = 0.99;
  double learning_rate = 0.5;
  int iterations = 3000;
};

/// Full-batch TD on a value table indexed by latent state, with a soft-synced
/// target table. Returns the learned values.
std::vector<double> tabular_td(std::span<const TabularTransition> transitions, int n_states,
                               const TabularTdConfig& config = {});

}  // namespace tdsmrp

#endif  // TDSMRP_TRAINING_HPP
