// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>

namespace tdsmrp::testing {

double brute_force_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

std::vector<double> by_step_up_direct(std::span<const double> p) {
  const std::size_t m = p.size();
  double c = 0.0;
  for (std::size_t k = 1; k <= m; ++k) c += 1.0 / static_cast<double>(k);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    double best = 1.0;
    for (std::size_t j = r; j < m; ++j) {
      const double v = std::min(1.0, static_cast<double>(m) * c * p[order[j]] / static_cast<double>(j + 1));
      best = std::min(best, v);
    }
    out[order[r]] = best;
  }
  return out;
}

double t_upper_tail_quadrature(double t, double df) {
  const double log_norm = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                          0.5 * std::log(df * M_PI);
  auto density = [&](double x) {
    return std::exp(log_norm - (df + 1.0) / 2.0 * std::log1p(x * x / df));
  };
  // Integrate over [|t|, inf) and reflect for negative t.
  boost::math::quadrature::exp_sinh<double> integrator;
  const double a = std::abs(t);
  const double tail = integrator.integrate([&](double u) { return density(a + u); }, 0.0,
                                           std::numeric_limits<double>::infinity(), 1e-14);
  return t >= 0.0 ? tail : 1.0 - tail;
}

double batch_loss(const ValueModel<double>& model, std::span<const ObservationWindow* const> batch,
                  std::span<const double> targets, std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double p = model.forward(*batch[i]);
    total -= weights[i] * (targets[i] * std::log(p) + (1.0 - targets[i]) * std::log1p(-p));
  }
  return total / static_cast<double>(batch.size());
}

namespace {

// Signs of every ReLU pre-activation the batch passes through.
std::vector<bool> relu_signs(const ValueModel<double>& model,
                             std::span<const ObservationWindow* const> batch) {
  std::vector<bool> out;
  ValueModel<double>::Trace tr;
  for (const auto* w : batch) {
    model.forward(*w, tr);
    for (const auto& m : tr.hidden_pre)
      for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > 0.0);
    for (const auto& m : tr.conv_pre)
      for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > 0.0);
  }
  return out;
}

}  // namespace

std::vector<double> finite_difference(ValueModel<double> model,
                                      std::span<const ObservationWindow* const> batch,
                                      std::span<const double> targets, std::span<const double> weights,
                                      std::span<const Eigen::Index> indices, double step,
                                      std::vector<std::uint8_t>* kinks) {
  std::vector<double> out;
  out.reserve(indices.size());
  if (kinks) kinks->assign(indices.size(), 0);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    const double saved = model.parameters()[i];
    model.parameters()[i] = saved + step;
    const double up = batch_loss(model, batch, targets, weights);
    std::vector<bool> signs_up;
    if (kinks) signs_up = relu_signs(model, batch);
    model.parameters()[i] = saved - step;
    const double down = batch_loss(model, batch, targets, weights);
    if (kinks) (*kinks)[k] = relu_signs(model, batch) != signs_up;
    model.parameters()[i] = saved;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

ModelConfig small_model_config(int feature_vocab) {
  ModelConfig c;
  c.embed_dim = 8;
  c.conv = {{4, 2, 12}, {3, 2, 12}};
  c.recurrent_hidden = 12;
  c.decoder_hidden = 10;
  c.feature_vocab = feature_vocab;
  return c;
}

WindowFixture window_fixture(std::size_t episodes, std::uint64_t seed) {
  WindowFixture f;
  f.cohort = default_cohort();
  f.episodes = sample_cohort(f.cohort, episodes, seed);
  std::vector<std::size_t> all(f.episodes.size());
  std::iota(all.begin(), all.end(), 0);
  f.stats = fit_standardization(f.episodes, all, f.cohort.registry).stats;
  for (std::size_t e = 0; e < f.episodes.size(); ++e)
    for (auto a : enumerate_anchors(f.episodes[e], f.cohort.registry, AnchorSampling::uniform(3, seed)))
      f.windows.push_back(assemble_window(f.episodes[e], a, f.cohort.registry, f.stats));
  return f;
}

std::optional<std::size_t> brute_force_next(const Episode& episode, std::size_t anchor,
                                            const FeatureRegistry& registry, double delay_x,
                                            double window_len) {
  const double t0 = episode.events[anchor].time;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < episode.events.size(); ++i) {
    const auto& e = episode.events[i];
    if (registry.is_demographic(e.feature)) continue;
    if (e.time < t0 + delay_x || e.time > t0 + delay_x + window_len) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = episode.events[*best];
    if (e.time < b.time || (e.time == b.time && e.feature < b.feature)) best = i;
  }
  return best;
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string command = "\"" + cli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>());
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("tdsmrp-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tdsmrp::testing
