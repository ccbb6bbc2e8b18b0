// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "tdsmrp/simulator.hpp"

namespace tdsmrp {
namespace {

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sd_of_mean(const std::vector<double>& x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

TEST(SampleEpisode, NoDeathRateMeansDischarge) {
  auto c = ladder3_cohort();
  for (int i = 0; i < c.n_latent; ++i) {
    c.rate_matrix(i, c.discharge_state()) += c.rate_matrix(i, c.death_state());
    c.rate_matrix(i, c.death_state()) = 0.0;
  }
  for (const auto& e : sample_cohort(c, 2000, 4)) EXPECT_EQ(e.outcome, Outcome::discharge);
}

TEST(SampleEpisode, SingleStateMeanStay) {
  const auto c = single_state_cohort(0.01, 0.01);  // total exit rate 0.02/h
  std::vector<double> ends;
  for (const auto& e : sample_cohort(c, 100000, 9)) ends.push_back(e.end_time);
  const double sigma = 50.0 / std::sqrt(static_cast<double>(ends.size()));
  EXPECT_NEAR(mean_of(ends), 50.0, 3.0 * sigma);
}

TEST(SampleEpisode, Deterministic) {
  const auto c = default_cohort();
  for (std::uint64_t i = 0; i < 20; ++i) EXPECT_EQ(sample_episode(c, 42, i), sample_episode(c, 42, i));
  EXPECT_NE(sample_episode(c, 42, 0).events, sample_episode(c, 43, 0).events);
  EXPECT_EQ(sample_cohort(c, 50, 5), sample_cohort(c, 50, 5));
}

TEST(SampleEpisode, EpisodesAreValidWithDemographicsAtZero) {
  const auto c = default_cohort();
  for (const auto& e : sample_cohort(c, 500, 1)) {
    EXPECT_NO_THROW(validate(e));
    int demographics = 0;
    for (const auto& ev : e.events)
      if (c.registry.is_demographic(ev.feature)) {
        ++demographics;
        EXPECT_EQ(ev.time, 0.0);
      }
    EXPECT_EQ(demographics, e.weight ? 3 : 2);
    ASSERT_FALSE(e.latent_path.empty());
    EXPECT_EQ(e.latent_path.front().enter_time, 0.0);
    EXPECT_EQ(e.latent_path.back().enter_time, e.end_time);
    EXPECT_EQ(e.latent_path.back().state, e.outcome == Outcome::death ? c.death_state() : c.discharge_state());
  }
}

TEST(AbsorptionProbability, SymmetricSingleStateIsHalf) {
  EXPECT_EQ(absorption_probability(single_state_cohort(0.01, 0.01))[0], 0.5);
}

TEST(AbsorptionProbability, CompetingExponentials) {
  EXPECT_NEAR(absorption_probability(single_state_cohort(1.0, 3.0))[0], 0.25, 1e-15);
}

TEST(AbsorptionProbability, SatisfiesFirstStepEquations) {
  for (const auto& c : {ladder3_cohort(), default_cohort()}) {
    const auto p = absorption_probability(c);
    for (int i = 0; i < c.n_latent; ++i) {
      const double exit = -c.rate_matrix(i, i);
      double rhs = c.rate_matrix(i, c.death_state()) / exit;
      for (int j = 0; j < c.n_latent; ++j)
        if (j != i) rhs += c.rate_matrix(i, j) / exit * p[j];
      EXPECT_NEAR(p[i], rhs, 1e-12);
      EXPECT_GT(p[i], 0.0);
      EXPECT_LT(p[i], 1.0);
    }
  }
}

TEST(AbsorptionProbability, MonteCarloDeathFrequencyFromInitialDistribution) {
  const auto c = ladder3_cohort();
  const double expected = c.initial_dist.dot(absorption_probability(c));
  const std::size_t n = 100000;
  double deaths = 0.0;
  for (const auto& e : sample_cohort(c, n, 21)) deaths += e.outcome == Outcome::death;
  const double sigma = std::sqrt(expected * (1.0 - expected) / static_cast<double>(n));
  EXPECT_NEAR(deaths / static_cast<double>(n), expected, 3.0 * sigma);
}

TEST(Validate, RejectsBrokenConfigs) {
  auto c = ladder3_cohort();
  c.initial_dist[0] += 0.1;
  EXPECT_THROW(validate(c), InvalidInput);
  c = ladder3_cohort();
  c.rate_matrix(0, 1) = -0.1;
  EXPECT_THROW(validate(c), InvalidInput);
  c = ladder3_cohort();
  c.rate_matrix(c.death_state(), 0) = 0.1;
  c.rate_matrix(c.death_state(), c.death_state()) = -0.1;
  EXPECT_THROW(validate(c), InvalidInput);
  c = ladder3_cohort();
  c.rate_matrix(0, 0) += 0.5;
  EXPECT_THROW(validate(c), InvalidInput);
}

TEST(AbsorptionProbability, UnreachableAbsorptionIsAnError) {
  // State 1 only feeds itself back and forth with state 0 which has no exit.
  CohortConfig c = single_state_cohort(0.1, 0.1);
  c.n_latent = 2;
  c.rate_matrix = Eigen::MatrixXd::Zero(4, 4);
  c.rate_matrix(0, 1) = 0.1;
  c.rate_matrix(0, 0) = -0.1;
  c.rate_matrix(1, 0) = 0.1;
  c.rate_matrix(1, 1) = -0.1;
  c.initial_dist = Eigen::Vector2d(1.0, 0.0);
  for (auto& e : c.emissions)
    if (!e.rate.empty()) e = {{0.5, 0.5}, {0.0, 0.0}, {1.0, 1.0}};
  EXPECT_THROW(absorption_probability(c), InvalidInput);
}

TEST(ApplyShift, IdentityLeavesConfigUnchanged) {
  const auto c = default_cohort();
  ShiftSpec s;
  EXPECT_TRUE(s.is_identity());
  EXPECT_EQ(apply_shift(c, s), c);
  s.emission_mean_shift.assign(c.registry.size(), 0.0);
  EXPECT_EQ(apply_shift(c, s), c);
}

TEST(ApplyShift, LowerDeathRateLowersEveryAbsorptionProbability) {
  const auto c = default_cohort();
  ShiftSpec s;
  s.death_scale = 0.5;
  const auto before = absorption_probability(c);
  const auto after = absorption_probability(apply_shift(c, s));
  for (int i = 0; i < c.n_latent; ++i) EXPECT_LT(after[i], before[i]);
}

TEST(ApplyShift, OriginalUntouched) {
  const auto c = default_cohort();
  const auto copy = c;
  (void)apply_shift(c, default_external_shift(c));
  EXPECT_EQ(c, copy);
}

TEST(ApplyShift, DoubledRateDoublesObservationCount) {
  const auto c = ladder3_cohort();
  ShiftSpec s;
  s.rate_scale = 2.0;
  const auto shifted = apply_shift(c, s);
  const std::size_t n = 50000;
  auto counts = [&](const CohortConfig& cfg) {
    std::vector<double> out;
    for (const auto& e : sample_cohort(cfg, n, 13)) {
      double k = 0.0;
      for (const auto& ev : e.events) k += !cfg.registry.is_demographic(ev.feature);
      out.push_back(k);
    }
    return out;
  };
  // Same seeds give the same latent paths, so the count ratio is tight.
  const auto base = counts(c);
  const auto doubled = counts(shifted);
  const double sigma = std::hypot(2.0 * sd_of_mean(base), sd_of_mean(doubled));
  EXPECT_NEAR(mean_of(doubled), 2.0 * mean_of(base), 3.0 * sigma);
}

TEST(ApplyShift, RejectsInvalidResult) {
  const auto c = ladder3_cohort();
  ShiftSpec s;
  s.rate_scale = 0.0;
  EXPECT_THROW(apply_shift(c, s), InvalidInput);
  s = {};
  s.initial_dist_override = Eigen::Vector3d(0.5, 0.5, 0.5);
  EXPECT_THROW(validate(apply_shift(c, s)), InvalidInput);
}

TEST(Emissions, EmpiricalMeansMatchPerLatentState) {
  const auto c = ladder3_cohort();
  const int S = c.n_latent;
  const std::size_t F = c.registry.size();
  std::vector<std::vector<std::vector<double>>> values(F, std::vector<std::vector<double>>(S));
  for (const auto& e : sample_cohort(c, 20000, 17))
    for (const auto& ev : e.events) {
      if (c.registry.is_demographic(ev.feature)) continue;
      const auto s = e.latent_state_at(ev.time);
      ASSERT_TRUE(s.has_value());
      ASSERT_LT(*s, S);
      values[ev.feature.index()][static_cast<std::size_t>(*s)].push_back(ev.value);
    }
  for (std::size_t f = 0; f < F; ++f) {
    if (c.emissions[f].mean.empty()) continue;
    for (int s = 0; s < S; ++s) {
      const auto& v = values[f][static_cast<std::size_t>(s)];
      ASSERT_GT(v.size(), 100u);
      EXPECT_NEAR(mean_of(v), c.emissions[f].mean[static_cast<std::size_t>(s)], 3.0 * sd_of_mean(v))
          << "feature " << f << " state " << s;
    }
  }
}

TEST(LatentPath, StateAtEventTimeIsTheContainingSegment) {
  const auto c = default_cohort();
  for (const auto& e : sample_cohort(c, 300, 23))
    for (const auto& ev : e.events) {
      int expected = -1;
      for (std::size_t k = 0; k + 1 < e.latent_path.size(); ++k)
        if (e.latent_path[k].enter_time <= ev.time && ev.time < e.latent_path[k + 1].enter_time)
          expected = e.latent_path[k].state;
      if (ev.time == e.end_time) continue;
      EXPECT_EQ(e.latent_state_at(ev.time), expected);
    }
}

TEST(DefaultCohort, ShapeMatchesFixtureDescription) {
  const auto c = default_cohort();
  EXPECT_EQ(c.n_latent, 4);
  int lab = 0, infusion = 0, bolus = 0;
  for (const auto& f : c.registry.features()) {
    lab += f.kind == FeatureKind::lab;
    infusion += f.kind == FeatureKind::infusion_rate;
    bolus += f.kind == FeatureKind::bolus;
  }
  EXPECT_EQ(lab, 8);
  EXPECT_EQ(infusion, 3);
  EXPECT_EQ(bolus, 1);
  EXPECT_NO_THROW(validate(c));
  EXPECT_NO_THROW(validate(apply_shift(c, default_external_shift(c))));
}

TEST(DefaultCohort, CensoringIsRare) {
  const auto c = default_cohort();
  int censored = 0;
  const auto eps = sample_cohort(c, 20000, 31);
  for (const auto& e : eps) censored += e.end_time >= c.max_duration;
  EXPECT_LT(censored, 20);
}

}  // namespace
}  // namespace tdsmrp
