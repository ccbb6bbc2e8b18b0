// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "tdsmrp/eval.hpp"
#include "tdsmrp/rng.hpp"

namespace tdsmrp {

namespace {

std::string format_number(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

std::vector<std::uint8_t> labels_at(std::span<const Sample> samples, double horizon_days) {
  const std::size_t h = horizon_index(horizon_days);
  std::vector<std::uint8_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].mortality[h];
  return out;
}

std::vector<const ObservationWindow*> windows_of(std::span<const Sample> samples) {
  std::vector<const ObservationWindow*> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = &samples[i].window();
  return out;
}

template <typename Scalar>
SeedResult train_seed_impl(const TrainConfig& config, std::uint64_t seed,
                           std::span<const Sample> train, std::span<const Sample> validation) {
  const auto start = std::chrono::steady_clock::now();
  const bool td = config.mode == TrainMode::td;
  const std::size_t n = train.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;

  ValueModel<Scalar> main =
      ValueModel<double>::initialized(config.model, stream_seed(seed, {0x1a17ULL}))
          .template cast<Scalar>();
  ValueModel<Scalar> target = main;

  SeedResult result;
  result.seed = seed;
  result.learning_rate =
      config.learning_rate.value_or(default_learning_rate(static_cast<std::size_t>(main.size())));
  result.weight_decay =
      config.weight_decay.value_or(default_weight_decay(result.learning_rate, batches));
  OptimizerState<Scalar> opt(main.size(), result.learning_rate, result.weight_decay);

  const auto train_labels = labels_at(train, config.horizon_days);
  const ClassWeights weights = config.balanced ? class_weights(train_labels) : ClassWeights{};
  const auto val_labels = labels_at(validation, config.horizon_days);
  const auto val_windows = windows_of(validation);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const ObservationWindow*> batch_windows;
  std::vector<const ObservationWindow*> next_windows;
  std::vector<std::size_t> next_slot;
  std::vector<Scalar> targets, sample_weights;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(seed, {0xe90cULL, static_cast<std::uint64_t>(epoch)});
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t clamped = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      batch_windows.clear();
      next_windows.clear();
      next_slot.clear();
      targets.assign(end - begin, Scalar(0));
      sample_weights.assign(end - begin, Scalar(0));
      for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = train[order[i]];
        batch_windows.push_back(&s.window());
        if (!td) {
          targets[i - begin] = static_cast<Scalar>(train_labels[order[i]]);
        } else if (s.transition.terminal()) {
          targets[i - begin] = static_cast<Scalar>(td_target(s.transition, 0.0, config.gamma));
        } else {
          next_windows.push_back(&*s.transition.next);
          next_slot.push_back(i - begin);
        }
      }
      if (!next_windows.empty()) {
        const auto next_values = predict(target, std::span<const ObservationWindow* const>(next_windows));
        for (std::size_t k = 0; k < next_slot.size(); ++k) {
          const auto& s = train[order[begin + next_slot[k]]];
          targets[next_slot[k]] = static_cast<Scalar>(td_target(s.transition, next_values[k], config.gamma));
        }
      }
      for (std::size_t k = 0; k < targets.size(); ++k)
        sample_weights[k] = static_cast<Scalar>(weights.at(static_cast<double>(targets[k])));

      LossGradient<Scalar> lg;
      try {
        lg = backward(main, std::span<const ObservationWindow* const>(batch_windows),
                      std::span<const Scalar>(targets), std::span<const Scalar>(sample_weights));
        optimizer_step(main.parameters(), lg.gradient, opt);
      } catch (const std::runtime_error& e) {
        throw TrainingFailure("seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) +
                              " batch " + std::to_string(b) + ": " + e.what());
      }
      if (td) soft_update(target, main, config.alpha);
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(end - begin);
      clamped += lg.clamped;
    }
    if (clamped > 0)
      std::clog << "tdsmrp: seed " << seed << " epoch " << epoch << ": " << clamped
                << " predictions clamped in the loss\n";

    const auto preds = predict(main, std::span<const ObservationWindow* const>(val_windows));
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (!std::isfinite(preds[i]))
        throw TrainingFailure("seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) +
                              ": non-finite validation prediction for sample " +
                              std::to_string(i));
    const double metric = auroc(preds, val_labels);
    const double train_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(train_loss))
      throw TrainingFailure("seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) +
                            ": non-finite training loss");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back({seed, epoch, train_loss, metric, elapsed});
    if (epoch == 1 || metric > result.best_val_metric) {
      result.best_val_metric = metric;
      result.best_epoch = epoch;
      result.model = main.template cast<double>();
    }
  }
  return result;
}

}  // namespace

void validate(const TrainConfig& c) {
  horizon_index(c.horizon_days);
  if (c.mode == TrainMode::td) validate(NextStateRule{c.delay_x, 24.0});
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw InvalidInput("alpha must lie in [0,1]");
  if (c.max_epochs < 1) throw InvalidInput("max_epochs must be at least 1");
  if (c.batch_size < 1) throw InvalidInput("batch_size must be at least 1");
  if (c.seeds.empty()) throw InvalidInput("at least one seed is required");
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw InvalidInput("gamma must lie in (0,1]");
  if (c.learning_rate && !(*c.learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
  if (c.weight_decay && !(*c.weight_decay >= 0.0)) throw InvalidInput("weight_decay must be nonnegative");
  validate(c.model);
}

std::string model_label(const TrainConfig& c) {
  std::string s = c.mode == TrainMode::td ? "td" + format_number(c.delay_x)
                                          : "sup" + format_number(c.horizon_days);
  if (c.balanced) s += "b";
  return s;
}

TrainConfig parse_model_label(const std::string& label, TrainConfig base) {
  std::string rest;
  if (label.rfind("td", 0) == 0) {
    base.mode = TrainMode::td;
    base.horizon_days = 28.0;
    rest = label.substr(2);
  } else if (label.rfind("sup", 0) == 0) {
    base.mode = TrainMode::supervised;
    rest = label.substr(3);
  } else {
    throw InvalidInput("unknown model '" + label + "'");
  }
  base.balanced = !rest.empty() && rest.back() == 'b';
  if (base.balanced) rest.pop_back();
  if (base.mode == TrainMode::supervised && rest.empty())
    throw InvalidInput("supervised model '" + label + "' needs a horizon");
  if (!rest.empty()) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != rest.size()) throw InvalidInput("malformed model label '" + label + "'");
    if (base.mode == TrainMode::td) base.delay_x = x;
    else base.horizon_days = x;
  }
  if (base.mode == TrainMode::supervised) horizon_index(base.horizon_days);
  return base;
}

double td_target(const TransitionSample& sample, double next_value, double gamma) {
  if (sample.terminal()) return sample.reward;
  return std::pow(gamma, sample.interval_k) * next_value;
}

double supervised_target(const ObservationWindow& window, const Episode& episode,
                         double horizon_days) {
  return mortality_within(episode, window.anchor_time, horizon_days) ? 1.0 : 0.0;
}

BceResult weighted_bce(std::span<const double> pred, std::span<const double> target,
                       const ClassWeights& weights) {
  if (pred.size() != target.size()) throw InvalidInput("weighted_bce: length mismatch");
  if (pred.empty()) throw InvalidInput("weighted_bce: empty input");
  BceResult out;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = target[i];
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("weighted_bce: target outside [0,1]");
    double p = pred[i];
    if (!(p >= kProbabilityClamp && p <= 1.0 - kProbabilityClamp)) {
      p = std::clamp(std::isnan(p) ? 0.5 : p, kProbabilityClamp, 1.0 - kProbabilityClamp);
      ++out.clamped;
    }
    const double pos = t > 0.0 ? weights.positive * t * std::log(p) : 0.0;
    const double neg = t < 1.0 ? weights.negative * (1.0 - t) * std::log(1.0 - p) : 0.0;
    total -= pos + neg;
  }
  if (out.clamped > 0)
    std::clog << "tdsmrp: weighted_bce clamped " << out.clamped << " predictions\n";
  out.loss = total / static_cast<double>(pred.size());
  return out;
}

double default_learning_rate(std::size_t n_params) {
  if (n_params == 0) throw InvalidInput("model has no parameters");
  return 1.0 / static_cast<double>(n_params);
}

double default_weight_decay(double learning_rate, std::size_t batches_per_epoch) {
  if (batches_per_epoch == 0) throw InvalidInput("no batches per epoch");
  return 1.0 / (learning_rate * static_cast<double>(batches_per_epoch));
}

SeedResult train_seed(const TrainConfig& config, std::uint64_t seed,
                      std::span<const Sample> train, std::span<const Sample> validation) {
  validate(config);
  if (train.empty()) throw InvalidInput("training set is empty");
  if (validation.empty()) throw InvalidInput("validation set is empty");
  if (config.mode == TrainMode::td && std::none_of(train.begin(), train.end(), [](const Sample& s) {
        return s.transition.terminal();
      }))
    throw InvalidInput("TD training set has no terminal transitions");
  {
    const auto labels = labels_at(validation, config.horizon_days);
    const auto pos = std::count(labels.begin(), labels.end(), std::uint8_t{1});
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size()))
      throw InvalidInput("validation set has a single class at the selection horizon");
  }
  if (config.precision == Precision::single)
    return train_seed_impl<float>(config, seed, train, validation);
  return train_seed_impl<double>(config, seed, train, validation);
}

std::vector<SeedResult> train(const TrainConfig& config, std::span<const Sample> train,
                              std::span<const Sample> validation) {
  std::vector<SeedResult> out;
  out.reserve(config.seeds.size());
  for (auto seed : config.seeds) out.push_back(train_seed(config, seed, train, validation));
  return out;
}

std::vector<SweepRow> sweep_delay(const TrainConfig& base, std::span<const double> delays,
                                  const SweepData& data) {
  if (delays.empty()) throw InvalidInput("sweep needs at least one delay");
  if (!data.registry || !data.stats || !data.split) throw InvalidInput("sweep data incomplete");
  const auto validation =
      build_samples(data.episodes, data.split->validation, *data.registry, *data.stats,
                    data.validation_sampling, std::nullopt);
  const auto val_windows = windows_of(validation);
  std::vector<SweepRow> rows;
  for (double x : delays) {
    TrainConfig config = base;
    config.mode = TrainMode::td;
    config.horizon_days = 28.0;
    config.delay_x = x;
    config.seeds = {base.seeds.front()};
    validate(config);
    const auto samples = build_samples(data.episodes, data.split->train, *data.registry,
                                       *data.stats, data.train_sampling, NextStateRule{x, 24.0});
    const SeedResult r = train_seed(config, config.seeds.front(), samples, validation);
    const auto preds = predict(r.model, std::span<const ObservationWindow* const>(val_windows));
    SweepRow row;
    row.delay_x = x;
    for (std::size_t h = 0; h < kHorizonsDays.size(); ++h) {
      const auto labels = labels_at(validation, kHorizonsDays[h]);
      const auto pos = std::count(labels.begin(), labels.end(), std::uint8_t{1});
      row.val_auroc[h] = pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())
                             ? std::nan("")
                             : auroc(preds, labels);
    }
    rows.push_back(row);
  }
  const std::size_t h28 = horizon_index(28.0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double a = rows[i].val_auroc[h28];
    const double b = rows[best].val_auroc[h28];
    if (a > b || (a == b && rows[i].delay_x < rows[best].delay_x) || (std::isnan(b) && !std::isnan(a)))
      best = i;
  }
  rows[best].selected = true;
  return rows;
}

std::vector<double> tabular_td(std::span<const TabularTransition> transitions, int n_states,
                               const TabularTdConfig& config) {
  if (n_states < 1) throw InvalidInput("tabular_td: n_states must be at least 1");
  if (!(config.alpha >= 0.0 && config.alpha < 1.0))
    throw InvalidInput("tabular_td: alpha must lie in [0,1)");
  auto in_range = [&](int s) { return s >= 0 && s < n_states; };
  for (const auto& t : transitions)
    if (!in_range(t.state) || (t.next_state && !in_range(*t.next_state)))
      throw InvalidInput("tabular_td: state index out of range");
  const auto n = static_cast<Eigen::Index>(n_states);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd target = value;
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n);
  for (const auto& t : transitions) count[t.state] += 1.0;
  for (int it = 0; it < config.iterations; ++it) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    for (const auto& t : transitions) sum[t.state] += t.next_state ? target[*t.next_state] : t.reward;
    for (Eigen::Index s = 0; s < n; ++s)
      if (count[s] > 0.0) value[s] += config.learning_rate * (sum[s] / count[s] - value[s]);
    target = config.alpha * target + (1.0 - config.alpha) * value;
  }
  return {value.data(), value.data() + n};
}

}  // namespace tdsmrp
