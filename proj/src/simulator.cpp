// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tdsmrp/parallel.hpp"
#include "tdsmrp/rng.hpp"

namespace tdsmrp {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidInput("cohort config: " + what); }

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

void check_distribution(const Eigen::VectorXd& dist, Eigen::Index n, const char* name) {
  if (dist.size() != n) fail(std::string(name) + " has wrong length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!finite_nonneg(dist[i])) fail(std::string(name) + " has a negative or non-finite entry");
  if (std::abs(dist.sum() - 1.0) > 1e-9) fail(std::string(name) + " does not sum to 1");
}

int sample_categorical(const Eigen::VectorXd& weights, Rng& rng) {
  double u = rng.uniform() * weights.sum();
  int last = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = static_cast<int>(i);
    if (u < weights[i]) return last;
    u -= weights[i];
  }
  return last;
}

void emit_segment(const CohortConfig& config, int state, double begin, double end, Rng& rng,
                  std::vector<RawEvent>& events) {
  for (std::size_t f = 0; f < config.emissions.size(); ++f) {
    const auto& spec = config.emissions[f];
    if (spec.rate.empty()) continue;
    const double rate = spec.rate[static_cast<std::size_t>(state)];
    if (rate <= 0.0) continue;
    const double mean = spec.mean[static_cast<std::size_t>(state)];
    const double sd = spec.std[static_cast<std::size_t>(state)];
    for (double t = begin + rng.exponential(rate); t < end; t += rng.exponential(rate))
      events.push_back({t, FeatureId(static_cast<std::int32_t>(f)), rng.normal(mean, sd)});
  }
}

}  // namespace

void validate(const CohortConfig& c) {
  if (c.n_latent < 1) fail("n_latent must be at least 1");
  const Eigen::Index n = c.n_latent + 2;
  if (c.rate_matrix.rows() != n || c.rate_matrix.cols() != n)
    fail("rate_matrix must be (n_latent+2) x (n_latent+2)");
  for (Eigen::Index i = 0; i < n; ++i) {
    double scale = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double q = c.rate_matrix(i, j);
      if (!std::isfinite(q)) fail("rate_matrix has a non-finite entry");
      if (i != j && q < 0.0) fail("rate_matrix has a negative off-diagonal rate");
      scale = std::max(scale, std::abs(q));
    }
    if (c.rate_matrix(i, i) > 0.0) fail("rate_matrix has a positive diagonal");
    if (std::abs(c.rate_matrix.row(i).sum()) > 1e-9 * std::max(1.0, scale))
      fail("rate_matrix row " + std::to_string(i) + " does not sum to 0");
    if (i >= c.n_latent && scale != 0.0) fail("absorbing rows of rate_matrix must be zero");
  }
  // Every transient state must reach an absorbing state.
  std::vector<bool> reaches(static_cast<std::size_t>(n), false);
  reaches[static_cast<std::size_t>(c.death_state())] = true;
  reaches[static_cast<std::size_t>(c.discharge_state())] = true;
  for (bool changed = true; changed;) {
    changed = false;
    for (Eigen::Index i = 0; i < c.n_latent; ++i) {
      if (reaches[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i && c.rate_matrix(i, j) > 0.0 && reaches[static_cast<std::size_t>(j)]) {
          reaches[static_cast<std::size_t>(i)] = changed = true;
          break;
        }
    }
  }
  for (Eigen::Index i = 0; i < c.n_latent; ++i)
    if (!reaches[static_cast<std::size_t>(i)])
      fail("transient state " + std::to_string(i) + " cannot reach absorption");

  check_distribution(c.initial_dist, c.n_latent, "initial_dist");

  if (c.emissions.size() != c.registry.size()) fail("one emission spec per feature is required");
  for (std::size_t f = 0; f < c.emissions.size(); ++f) {
    const auto& spec = c.emissions[f];
    const FeatureId id(static_cast<std::int32_t>(f));
    const auto& name = c.registry[id].name;
    if (c.registry.is_demographic(id)) {
      if (!spec.rate.empty()) fail("demographic feature '" + name + "' cannot have emissions");
      continue;
    }
    const auto s = static_cast<std::size_t>(c.n_latent);
    if (spec.rate.size() != s || spec.mean.size() != s || spec.std.size() != s)
      fail("emission spec for '" + name + "' needs one entry per transient state");
    for (std::size_t k = 0; k < s; ++k) {
      if (!finite_nonneg(spec.rate[k])) fail("emission rate for '" + name + "' is invalid");
      if (!std::isfinite(spec.mean[k])) fail("emission mean for '" + name + "' is invalid");
      if (!(spec.std[k] > 0.0) || !std::isfinite(spec.std[k]))
        fail("emission std for '" + name + "' must be positive");
    }
  }

  const auto& d = c.demographics;
  if (!(d.female_prob >= 0.0 && d.female_prob <= 1.0)) fail("female_prob outside [0,1]");
  if (!(d.weight_missing_prob >= 0.0 && d.weight_missing_prob <= 1.0))
    fail("weight_missing_prob outside [0,1]");
  if (!(d.age_std >= 0.0) || !(d.weight_std >= 0.0)) fail("demographic std must be nonnegative");
  if (!(d.age_min <= d.age_max)) fail("age_min exceeds age_max");
  if (!(c.max_duration > 0.0) || !std::isfinite(c.max_duration))
    fail("max_duration must be positive and finite");
}

bool ShiftSpec::is_identity() const {
  return std::all_of(emission_mean_shift.begin(), emission_mean_shift.end(),
                     [](double x) { return x == 0.0; }) &&
         rate_scale == 1.0 && !initial_dist_override && death_scale == 1.0 &&
         discharge_scale == 1.0;
}

Episode sample_episode(const CohortConfig& config, std::uint64_t seed, std::uint64_t index) {
  Rng rng(seed, {index});
  Episode ep;
  ep.patient_id = static_cast<std::int64_t>(index);

  const auto& demo = config.demographics;
  ep.sex = rng.bernoulli(demo.female_prob) ? Sex::female : Sex::male;
  ep.age = std::clamp(rng.normal(demo.age_mean, demo.age_std), demo.age_min, demo.age_max);
  const bool weight_missing = rng.bernoulli(demo.weight_missing_prob);
  const double weight_mean =
      ep.sex == Sex::female ? demo.weight_mean_female : demo.weight_mean_male;
  const double weight = std::max(30.0, rng.normal(weight_mean, demo.weight_std));
  if (!weight_missing) ep.weight = weight;

  const auto& reg = config.registry;
  ep.events.push_back({0.0, reg.age(), ep.age});
  ep.events.push_back({0.0, reg.sex(), ep.sex == Sex::female ? 0.0 : 1.0});
  if (ep.weight) ep.events.push_back({0.0, reg.weight(), *ep.weight});

  const Eigen::MatrixXd& q = config.rate_matrix;
  int state = sample_categorical(config.initial_dist, rng);
  double now = 0.0;
  ep.latent_path.push_back({0.0, state});

  while (!config.is_absorbing(state)) {
    // Competing exponential clocks, one per outgoing transition.
    double first = std::numeric_limits<double>::infinity();
    int next = state;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (j == state || q(state, j) <= 0.0) continue;
      const double clock = rng.exponential(q(state, j));
      if (clock < first) {
        first = clock;
        next = static_cast<int>(j);
      }
    }
    const double leave = now + first;
    if (leave >= config.max_duration) {
      emit_segment(config, state, now, config.max_duration, rng, ep.events);
      now = config.max_duration;
      state = config.discharge_state();
      ep.latent_path.push_back({now, state});
      break;
    }
    emit_segment(config, state, now, leave, rng, ep.events);
    now = leave;
    state = next;
    ep.latent_path.push_back({now, state});
  }

  ep.outcome = state == config.death_state() ? Outcome::death : Outcome::discharge;
  ep.end_time = now;
  std::stable_sort(ep.events.begin(), ep.events.end(), event_before);
  return ep;
}

std::vector<Episode> sample_cohort(const CohortConfig& config, std::size_t n, std::uint64_t seed) {
  validate(config);
  std::vector<Episode> episodes(n);
  parallel_for(n, [&](std::size_t i) { episodes[i] = sample_episode(config, seed, i); });
  return episodes;
}

Eigen::VectorXd absorption_probability(const CohortConfig& config) {
  validate(config);
  const Eigen::Index s = config.n_latent;
  const Eigen::MatrixXd a = -config.rate_matrix.topLeftCorner(s, s);
  const Eigen::VectorXd b = config.rate_matrix.block(0, config.death_state(), s, 1);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw InvalidInput("absorption system is singular");
  return lu.solve(b);
}

CohortConfig apply_shift(const CohortConfig& config, const ShiftSpec& shift) {
  CohortConfig out = config;
  if (!shift.emission_mean_shift.empty()) {
    if (shift.emission_mean_shift.size() != config.registry.size())
      throw InvalidInput("shift: emission_mean_shift needs one entry per feature");
    for (std::size_t f = 0; f < out.emissions.size(); ++f) {
      const double delta = shift.emission_mean_shift[f];
      if (delta == 0.0) continue;
      if (out.emissions[f].mean.empty())
        throw InvalidInput("shift: demographic features cannot be mean-shifted");
      for (auto& m : out.emissions[f].mean) m += delta;
    }
  }
  if (!(shift.rate_scale > 0.0) || !std::isfinite(shift.rate_scale))
    throw InvalidInput("shift: rate_scale must be positive");
  if (shift.rate_scale != 1.0)
    for (auto& e : out.emissions)
      for (auto& r : e.rate) r *= shift.rate_scale;
  if (shift.initial_dist_override) out.initial_dist = *shift.initial_dist_override;
  if (!(shift.death_scale >= 0.0) || !(shift.discharge_scale >= 0.0))
    throw InvalidInput("shift: absorption scales must be nonnegative");
  if (shift.death_scale != 1.0 || shift.discharge_scale != 1.0) {
    for (int i = 0; i < out.n_latent; ++i) {
      out.rate_matrix(i, out.death_state()) *= shift.death_scale;
      out.rate_matrix(i, out.discharge_state()) *= shift.discharge_scale;
      double exit = 0.0;
      for (Eigen::Index j = 0; j < out.rate_matrix.cols(); ++j)
        if (j != i) exit += out.rate_matrix(i, j);
      out.rate_matrix(i, i) = -exit;
    }
  }
  validate(out);
  return out;
}

// ---------------------------------------------------------------------------
// Fixtures

namespace {

Eigen::MatrixXd generator(const std::vector<std::vector<double>>& transient_rows) {
  const auto s = static_cast<Eigen::Index>(transient_rows.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(s + 2, s + 2);
  for (Eigen::Index i = 0; i < s; ++i) {
    double exit = 0.0;
    for (Eigen::Index j = 0; j < s + 2; ++j) {
      if (j == i) continue;
      q(i, j) = transient_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      exit += q(i, j);
    }
    q(i, i) = -exit;
  }
  return q;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

CohortConfig single_state_cohort(double death_rate, double discharge_rate) {
  CohortConfig c;
  c.registry = FeatureRegistry::with_demographics({{"lab_0", FeatureKind::lab}});
  c.n_latent = 1;
  c.rate_matrix = generator({{0.0, death_rate, discharge_rate}});
  c.initial_dist = vec({1.0});
  c.emissions.assign(c.registry.size(), EmissionSpec{});
  c.emissions[3] = {{0.5}, {0.0}, {1.0}};
  c.max_duration = 24.0 * 365.0 * 10.0;
  return c;
}

CohortConfig ladder3_cohort() {
  CohortConfig c;
  c.registry = FeatureRegistry::with_demographics(
      {{"lab_0", FeatureKind::lab}, {"lab_1", FeatureKind::lab}});
  c.n_latent = 3;
  //             s0     s1     s2     death  discharge
  c.rate_matrix = generator({{0.0, 0.020, 0.0, 0.001, 0.050},
                             {0.030, 0.0, 0.020, 0.005, 0.010},
                             {0.0, 0.030, 0.0, 0.050, 0.0}});
  c.initial_dist = vec({0.5, 0.3, 0.2});
  c.emissions.assign(c.registry.size(), EmissionSpec{});
  c.emissions[3] = {{0.2, 0.3, 0.5}, {0.0, 1.0, 2.0}, {1.0, 1.0, 1.0}};
  c.emissions[4] = {{0.1, 0.2, 0.4}, {5.0, 4.0, 3.0}, {0.5, 0.5, 0.5}};
  c.max_duration = 24.0 * 365.0;
  return c;
}

CohortConfig default_cohort() {
  CohortConfig c;
  c.registry = FeatureRegistry::with_demographics({
      {"lab_0", FeatureKind::lab},
      {"lab_1", FeatureKind::lab},
      {"lab_2", FeatureKind::lab},
      {"lab_3", FeatureKind::lab},
      {"lab_4", FeatureKind::lab},
      {"lab_5", FeatureKind::lab},
      {"lab_6", FeatureKind::lab},
      {"lab_7", FeatureKind::lab},
      {"infusion_0", FeatureKind::infusion_rate},
      {"infusion_1", FeatureKind::infusion_rate},
      {"infusion_2", FeatureKind::infusion_rate},
      {"bolus_0", FeatureKind::bolus},
  });
  c.n_latent = 4;
  // 0 stable, 1 moderate, 2 chronic decline (high eventual risk, slow),
  // 3 acute (high short-term hazard, often recovers).
  //             s0     s1     s2     s3     death   discharge
  c.rate_matrix = generator({{0.0, 0.004, 0.0, 0.0, 0.0001, 0.012},
                             {0.008, 0.0, 0.004, 0.002, 0.0003, 0.002},
                             {0.0, 0.002, 0.0, 0.001, 0.0040, 0.0003},
                             {0.0, 0.030, 0.0, 0.0, 0.0200, 0.0}});
  c.initial_dist = vec({0.40, 0.35, 0.15, 0.10});
  c.emissions.assign(c.registry.size(), EmissionSpec{});
  auto feature = [&](std::size_t id, std::vector<double> rate, std::vector<double> mean, double sd) {
    c.emissions[id] = {std::move(rate), std::move(mean), std::vector<double>(4, sd)};
  };
  // Severity markers.
  feature(3, {0.05, 0.06, 0.07, 0.10}, {1.0, 2.2, 3.4, 3.6}, 0.5);
  feature(4, {0.04, 0.05, 0.06, 0.08}, {90.0, 115.0, 145.0, 140.0}, 15.0);
  // Acute markers: move in state 3 only.
  feature(5, {0.02, 0.03, 0.03, 0.08}, {7.40, 7.38, 7.37, 7.20}, 0.05);
  feature(6, {0.02, 0.03, 0.03, 0.06}, {1.2, 1.5, 1.6, 4.5}, 0.6);
  // Chronic markers: move in state 2 only.
  feature(7, {0.02, 0.02, 0.03, 0.02}, {1.0, 1.3, 3.0, 1.5}, 0.4);
  feature(8, {0.02, 0.02, 0.03, 0.02}, {220.0, 200.0, 110.0, 190.0}, 40.0);
  // Uninformative.
  feature(9, {0.02, 0.02, 0.02, 0.02}, {140.0, 140.0, 140.0, 140.0}, 4.0);
  feature(10, {0.02, 0.02, 0.02, 0.02}, {4.2, 4.2, 4.2, 4.2}, 0.5);
  // Treatments, given more often when sicker.
  feature(11, {0.002, 0.01, 0.02, 0.08}, {0.05, 0.10, 0.10, 0.40}, 0.08);
  feature(12, {0.01, 0.02, 0.03, 0.03}, {80.0, 90.0, 110.0, 110.0}, 30.0);
  feature(13, {0.01, 0.01, 0.02, 0.02}, {2.0, 2.0, 2.6, 2.6}, 1.0);
  feature(14, {0.005, 0.01, 0.01, 0.04}, {20.0, 20.0, 25.0, 40.0}, 10.0);
  c.max_duration = 24.0 * 365.0;
  return c;
}

ShiftSpec default_external_shift(const CohortConfig& config) {
  ShiftSpec s;
  s.emission_mean_shift.assign(config.registry.size(), 0.0);
  // Calibration offsets of roughly half a standard deviation on a few labs.
  s.emission_mean_shift[4] = 12.0;
  s.emission_mean_shift[7] = 0.3;
  s.emission_mean_shift[9] = 2.0;
  s.emission_mean_shift[10] = 0.25;
  s.rate_scale = 0.8;
  s.initial_dist_override = vec({0.45, 0.30, 0.17, 0.08});
  s.death_scale = 0.7;
  return s;
}

}  // namespace tdsmrp
