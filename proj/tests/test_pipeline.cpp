// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "support.hpp"
#include "tdsmrp/pipeline.hpp"
#include "tdsmrp/rng.hpp"

namespace tdsmrp {
namespace {

// Registry: 0 age, 1 sex, 2 weight, 3..4 labs, 5..9 infusions.
FeatureRegistry test_registry() {
  std::vector<FeatureInfo> f{{"lab_a", FeatureKind::lab}, {"lab_b", FeatureKind::lab}};
  for (int i = 0; i < 5; ++i) f.push_back({"inf_" + std::to_string(i), FeatureKind::infusion_rate});
  return FeatureRegistry::with_demographics(f);
}

const FeatureId kLabA{3}, kLabB{4};

Episode with_demographics(std::vector<RawEvent> events, bool weight = true) {
  Episode e;
  e.patient_id = 1;
  e.age = 60;
  e.weight = weight ? std::optional<double>(80.0) : std::nullopt;
  std::vector<RawEvent> all{{0.0, FeatureId(0), 60.0}, {0.0, FeatureId(1), 1.0}};
  if (weight) all.push_back({0.0, FeatureId(2), 80.0});
  all.insert(all.end(), events.begin(), events.end());
  std::stable_sort(all.begin(), all.end(), event_before);
  e.events = all;
  e.end_time = all.back().time + 1.0;
  return e;
}

std::size_t index_of_time(const Episode& e, double t) {
  for (std::size_t i = 0; i < e.events.size(); ++i)
    if (e.events[i].time == t && !test_registry().is_demographic(e.events[i].feature)) return i;
  throw std::logic_error("no event at time");
}

TEST(EnumerateAnchors, AllNonDemographicEvents) {
  std::vector<RawEvent> ev;
  for (int i = 0; i < 10; ++i) ev.push_back({1.0 + i, kLabA, 0.0});
  const auto e = with_demographics(ev);
  EXPECT_EQ(enumerate_anchors(e, test_registry(), AnchorSampling::all()).size(), 10u);
}

TEST(EnumerateAnchors, UniformSubsampleIsReproducible) {
  std::vector<RawEvent> ev;
  for (int i = 0; i < 10; ++i) ev.push_back({1.0 + i, kLabA, 0.0});
  const auto e = with_demographics(ev);
  const auto a = enumerate_anchors(e, test_registry(), AnchorSampling::uniform(3, 9));
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a, enumerate_anchors(e, test_registry(), AnchorSampling::uniform(3, 9)));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  for (auto i : a) EXPECT_FALSE(test_registry().is_demographic(e.events[i].feature));
}

TEST(EnumerateAnchors, DemographicsOnlyEpisodeHasNoAnchors) {
  const auto e = with_demographics({});
  EXPECT_TRUE(enumerate_anchors(e, test_registry(), AnchorSampling::all()).empty());
  EXPECT_TRUE(enumerate_anchors(e, test_registry(), AnchorSampling::uniform(3, 1)).empty());
}

TEST(EnumerateAnchors, ThinnedKeepsFractionIndependentlyOfEpisode) {
  std::vector<RawEvent> ev;
  for (int i = 0; i < 20000; ++i) ev.push_back({0.01 * (i + 1), kLabA, 0.0});
  const auto e = with_demographics(ev);
  const auto a = enumerate_anchors(e, test_registry(), AnchorSampling::thinned(0.2, 4));
  const double sigma = std::sqrt(0.2 * 0.8 * 20000.0);
  EXPECT_NEAR(static_cast<double>(a.size()), 4000.0, 3.0 * sigma);
  EXPECT_EQ(a, enumerate_anchors(e, test_registry(), AnchorSampling::thinned(0.2, 4)));
  // The keep decision for an event does not depend on the rest of the episode.
  auto shorter = e;
  shorter.events.resize(shorter.events.size() / 2);
  const auto b = enumerate_anchors(shorter, test_registry(), AnchorSampling::thinned(0.2, 4));
  std::vector<std::size_t> prefix;
  for (auto i : a)
    if (i < shorter.events.size()) prefix.push_back(i);
  EXPECT_EQ(b, prefix);
}

TEST(AnchorSampling, ParseAndPrint) {
  EXPECT_EQ(parse_anchor_sampling("all", 3), AnchorSampling::all());
  EXPECT_EQ(parse_anchor_sampling("uniform:32", 3), AnchorSampling::uniform(32, 3));
  EXPECT_EQ(parse_anchor_sampling("thinned:0.05", 3), AnchorSampling::thinned(0.05, 3));
  for (const char* bad : {"", "some", "uniform:0", "uniform:x", "thinned:0", "thinned:1.5", "thinned:"})
    EXPECT_THROW(parse_anchor_sampling(bad, 0), InvalidInput) << bad;
  EXPECT_EQ(to_string(AnchorSampling::thinned(0.05, 1)), "thinned:0.05");
  EXPECT_EQ(to_string(AnchorSampling::uniform(8, 1)), "uniform:8");
}

TEST(AssembleWindow, SmallWindowKeepsEverythingInTimeOrder) {
  std::vector<RawEvent> ev;
  for (int i = 0; i < 47; ++i) ev.push_back({10.0 + i, i % 2 ? kLabA : kLabB, 1.0 * i});
  const auto e = with_demographics(ev);
  const auto reg = test_registry();
  const auto stats = StandardizationStats::identity(reg.size());
  const auto w = assemble_window(e, e.events.size() - 1, reg, stats);
  EXPECT_EQ(w.size(), 50u);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_LE(w.tuples[i - 1].time_offset, w.tuples[i].time_offset);
  EXPECT_EQ(w.tuples.back().time_offset, 0.0);
  EXPECT_EQ(w.anchor_feature, e.events.back().feature);
}

TEST(AssembleWindow, OverflowKeepsDemographicsAndLatestInfusions) {
  std::vector<RawEvent> ev;
  for (int i = 0; i < 442; ++i) ev.push_back({100.0 + 0.1 * i, i % 2 ? kLabA : kLabB, 1.0});
  // One early value per infusion feature: the oldest events in the window.
  for (int k = 0; k < 5; ++k) ev.push_back({1.0 + k, FeatureId(5 + k), 2.0 + k});
  const auto e = with_demographics(ev);
  const auto reg = test_registry();
  const auto stats = StandardizationStats::identity(reg.size());
  ASSERT_EQ(e.events.size(), 450u);
  const auto w = assemble_window(e, e.events.size() - 1, reg, stats);
  EXPECT_EQ(w.size(), 400u);
  std::set<std::int32_t> features;
  for (const auto& t : w.tuples) features.insert(t.feature.value);
  for (int f = 0; f < 10; ++f) EXPECT_TRUE(features.count(f)) << "feature " << f;
  EXPECT_EQ(w.tuples.back().time_offset, 0.0);  // the anchor itself
}

TEST(AssembleWindow, LookbackBoundaryInclusive) {
  const auto reg = test_registry();
  const auto stats = StandardizationStats::identity(reg.size());
  const auto e = with_demographics({{1.0, kLabA, 1.0}, {2.0, kLabB, 1.0}, {170.0, kLabA, 2.0}});
  const auto w = assemble_window(e, index_of_time(e, 170.0), reg, stats);
  // lab at t=1 is 169 h back: excluded; lab at t=2 is exactly 168 h back: included.
  EXPECT_EQ(w.size(), 5u);
  EXPECT_EQ(w.tuples[3].time_offset, -168.0);
  EXPECT_EQ(w.tuples[3].feature, kLabB);
  for (const auto& t : w.tuples) EXPECT_GE(t.time_offset, -168.0);
}

TEST(AssembleWindow, DeltasOnlyWithinLookback) {
  const auto reg = test_registry();
  const auto stats = StandardizationStats::identity(reg.size());
  const auto e = with_demographics({{1.0, kLabA, 1.0}, {100.0, kLabA, 4.0}, {180.0, kLabA, 6.0}});
  const auto w = assemble_window(e, index_of_time(e, 180.0), reg, stats);
  ASSERT_EQ(w.size(), 5u);
  EXPECT_FALSE(w.tuples[3].has_delta);  // t=100; its predecessor at t=1 is outside the window
  EXPECT_TRUE(w.tuples[4].has_delta);
  EXPECT_EQ(w.tuples[4].delta_value, 2.0);
  EXPECT_EQ(w.tuples[4].delta_time, 80.0);
}

TEST(AssembleWindow, ImputesMissingWeightBySex) {
  const auto reg = test_registry();
  auto stats = StandardizationStats::identity(reg.size());
  auto e = with_demographics({{5.0, kLabA, 1.0}}, false);
  e.sex = Sex::female;
  auto w = assemble_window(e, index_of_time(e, 5.0), reg, stats);
  auto weight_of = [&](const ObservationWindow& win) {
    for (const auto& t : win.tuples)
      if (t.feature == reg.weight()) return t.value;
    return -1.0;
  };
  EXPECT_EQ(weight_of(w), 74.0);
  e.sex = Sex::male;
  w = assemble_window(e, index_of_time(e, 5.0), reg, stats);
  EXPECT_EQ(weight_of(w), 86.0);
}

TEST(AssembleWindow, ClipsOutliers) {
  const auto reg = test_registry();
  auto stats = StandardizationStats::identity(reg.size());
  stats.bounds[kLabA.index()] = {0.0, 10.0};
  const auto e = with_demographics({{5.0, kLabA, 50.0}});
  const auto w = assemble_window(e, index_of_time(e, 5.0), reg, stats);
  EXPECT_EQ(w.tuples.back().value, 10.0);
}

TEST(AssembleWindow, RejectsForeignAnchor) {
  const auto reg = test_registry();
  const auto stats = StandardizationStats::identity(reg.size());
  const auto e = with_demographics({{5.0, kLabA, 1.0}});
  EXPECT_THROW(assemble_window(e, 99, reg, stats), InvalidInput);
  EXPECT_THROW(assemble_window(e, 0, reg, stats), InvalidInput);  // demographic event
}

TEST(AssembleWindow, NeverExceedsLimitAndKeepsDemographicsProperty) {
  const auto reg = test_registry();
  const auto stats = StandardizationStats::identity(reg.size());
  Rng rng(5, {2});
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<RawEvent> ev;
    const int n = 300 + static_cast<int>(rng.below(600));
    for (int i = 0; i < n; ++i)
      ev.push_back({rng.uniform(0.0, 300.0), FeatureId(3 + static_cast<std::int32_t>(rng.below(7))), rng.normal()});
    const auto e = with_demographics(ev, rng.uniform() < 0.5);
    for (auto a : enumerate_anchors(e, reg, AnchorSampling::uniform(5, trial))) {
      const auto w = assemble_window(e, a, reg, stats);
      EXPECT_LE(w.size(), kMaxWindowLength);
      int demographics = 0;
      for (const auto& t : w.tuples) demographics += reg.is_demographic(t.feature);
      EXPECT_EQ(demographics, 3);
      for (std::size_t i = 1; i < w.size(); ++i)
        EXPECT_LE(w.tuples[i - 1].time_offset, w.tuples[i].time_offset);
    }
  }
}

TEST(SelectNextState, EarliestInWindow) {
  const auto reg = test_registry();
  const auto e = with_demographics({{10.0, kLabA, 0}, {35.0, kLabA, 0}, {40.0, kLabB, 0}});
  const auto next = select_next_state(e, index_of_time(e, 10.0), reg, {24.0, 24.0});
  ASSERT_TRUE(next);
  EXPECT_EQ(e.events[*next].time, 35.0);
}

TEST(SelectNextState, SilentWindowIsTerminal) {
  const auto reg = test_registry();
  const auto e = with_demographics({{10.0, kLabA, 0}, {20.0, kLabA, 0}, {59.0, kLabB, 0}});
  EXPECT_FALSE(select_next_state(e, index_of_time(e, 10.0), reg, {24.0, 24.0}));
}

TEST(SelectNextState, WindowIsDelayed) {
  const auto reg = test_registry();
  const auto e = with_demographics({{10.0, kLabA, 0}, {13.0, kLabA, 0}});
  EXPECT_FALSE(select_next_state(e, index_of_time(e, 10.0), reg, {4.0, 24.0}));
}

TEST(SelectNextState, TiesGoToLowerFeatureIdAndBoundsInclusive) {
  const auto reg = test_registry();
  const auto e = with_demographics({{10.0, kLabA, 0}, {34.0, kLabB, 0}, {34.0, kLabA, 1}});
  const auto next = select_next_state(e, index_of_time(e, 10.0), reg, {24.0, 24.0});
  ASSERT_TRUE(next);
  EXPECT_EQ(e.events[*next].feature, kLabA);
  const auto f = with_demographics({{10.0, kLabA, 0}, {58.0, kLabB, 0}});
  EXPECT_TRUE(select_next_state(f, index_of_time(f, 10.0), reg, {24.0, 24.0}));
}

TEST(SelectNextState, RejectsDelaysOutsideTheSweep) {
  const auto reg = test_registry();
  const auto e = with_demographics({{10.0, kLabA, 0}});
  EXPECT_THROW(select_next_state(e, index_of_time(e, 10.0), reg, {5.0, 24.0}), InvalidInput);
  EXPECT_THROW(select_next_state(e, index_of_time(e, 10.0), reg, {24.0, 12.0}), InvalidInput);
}

TEST(SelectNextState, MatchesBruteForceScanProperty) {
  const auto c = default_cohort();
  const auto eps = sample_cohort(c, 300, 77);
  for (double x : kDelaySweepHours)
    for (const auto& e : eps)
      for (auto a : enumerate_anchors(e, c.registry, AnchorSampling::uniform(4, 1))) {
        const auto fast = select_next_state(e, a, c.registry, {x, 24.0});
        EXPECT_EQ(fast, testing::brute_force_next(e, a, c.registry, x));
        if (fast) {
          const double k = e.events[*fast].time - e.events[a].time;
          EXPECT_GE(k, x);
          EXPECT_LE(k, x + 24.0);
        }
      }
}

TEST(FitStandardization, ConstantFeatureFloorsStd) {
  const auto reg = test_registry();
  std::vector<Episode> eps;
  for (int p = 0; p < 5; ++p) {
    auto e = with_demographics({{1.0, kLabA, 3.0}, {2.0, kLabA, 3.0}, {3.0, kLabB, p * 1.0}});
    e.patient_id = p;
    eps.push_back(e);
  }
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const auto fit = fit_standardization(eps, idx, reg);
  EXPECT_EQ(fit.stats.value[kLabA.index()].std, 1e-6);
  EXPECT_NE(std::find(fit.report.floored.begin(), fit.report.floored.end(), kLabA), fit.report.floored.end());
  EXPECT_NE(std::find(fit.report.unobserved.begin(), fit.report.unobserved.end(), FeatureId(5)),
            fit.report.unobserved.end());
  const auto t = make_tuple({1.0, kLabA, 3.0}, 1.0, nullptr, fit.stats);
  EXPECT_EQ(t.value, 0.0);
}

TEST(FitStandardization, LabBoundsAreOrderStatistics) {
  const auto reg = test_registry();
  std::vector<RawEvent> ev;
  for (int i = 0; i < 1000; ++i) ev.push_back({0.1 * (i + 1), kLabA, static_cast<double>(1000 - i)});
  auto e = with_demographics(ev);
  const std::vector<Episode> eps{e};
  const std::vector<std::size_t> idx{0};
  const auto fit = fit_standardization(eps, idx, reg);
  EXPECT_EQ(fit.stats.bounds[kLabA.index()].low, 1.0);     // 1st order statistic
  EXPECT_EQ(fit.stats.bounds[kLabA.index()].high, 999.0);  // 999th order statistic
  EXPECT_EQ(fit.stats.bounds[0].low, -std::numeric_limits<double>::infinity());
}

TEST(FitStandardization, DrugBoundsUseWiderQuantiles) {
  const auto reg = test_registry();
  std::vector<RawEvent> ev;
  for (int i = 0; i < 1000; ++i) ev.push_back({0.1 * (i + 1), FeatureId(5), static_cast<double>(i + 1)});
  const std::vector<Episode> eps{with_demographics(ev)};
  const std::vector<std::size_t> idx{0};
  const auto fit = fit_standardization(eps, idx, reg);
  EXPECT_EQ(fit.stats.bounds[5].low, 5.0);
  EXPECT_EQ(fit.stats.bounds[5].high, 995.0);
}

TEST(FitStandardization, ImputesWeightBeforeFitting) {
  const auto reg = test_registry();
  auto a = with_demographics({{1.0, kLabA, 1.0}}, false);
  a.sex = Sex::female;
  auto b = with_demographics({{1.0, kLabA, 1.0}}, false);
  b.sex = Sex::male;
  b.patient_id = 2;
  const std::vector<Episode> eps{a, b};
  const std::vector<std::size_t> idx{0, 1};
  const auto fit = fit_standardization(eps, idx, reg);
  EXPECT_DOUBLE_EQ(fit.stats.value[reg.weight().index()].mean, 80.0);
}

TEST(FitStandardization, StandardizedTrainValuesAreZScoredProperty) {
  const auto c = default_cohort();
  const auto eps = sample_cohort(c, 400, 3);
  std::vector<std::size_t> idx(eps.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto stats = fit_standardization(eps, idx, c.registry).stats;
  std::vector<std::vector<double>> z(c.registry.size());
  for (const auto& e : eps)
    for (const auto& ev : e.events) {
      if (c.registry.is_demographic(ev.feature)) continue;
      const auto f = ev.feature.index();
      z[f].push_back((stats.bounds[f].clip(ev.value) - stats.value[f].mean) / stats.value[f].std);
    }
  for (std::size_t f = 3; f < z.size(); ++f) {
    double m = 0.0, ss = 0.0;
    for (double v : z[f]) m += v;
    m /= static_cast<double>(z[f].size());
    for (double v : z[f]) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(z[f].size()));
    EXPECT_LT(std::abs(m), 1e-6) << f;
    EXPECT_LT(std::abs(sd - 1.0), 1e-3) << f;
  }
}

TEST(SplitPatients, TenPatients) {
  std::vector<Episode> eps(10);
  for (int i = 0; i < 10; ++i) eps[i].patient_id = i;
  const auto s = split_patients(eps, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  const auto again = split_patients(eps, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.test, again.test);
}

TEST(SplitPatients, PatientEpisodesShareAFold) {
  std::vector<Episode> eps;
  for (int p = 0; p < 30; ++p)
    for (int k = 0; k < (p == 7 ? 3 : 1); ++k) {
      Episode e;
      e.patient_id = p;
      eps.push_back(e);
    }
  const auto s = split_patients(eps, {0.8, 0.1, 0.1}, 5);
  for (const auto* fold : {&s.train, &s.validation, &s.test}) {
    int count = 0;
    for (auto i : *fold) count += eps[i].patient_id == 7;
    EXPECT_TRUE(count == 0 || count == 3);
  }
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), eps.size());
}

TEST(SplitPatients, Errors) {
  std::vector<Episode> eps(2);
  eps[1].patient_id = 1;
  EXPECT_THROW(split_patients(eps, {0.8, 0.1, 0.1}, 0), InvalidInput);
  std::vector<Episode> many(10);
  for (int i = 0; i < 10; ++i) many[i].patient_id = i;
  EXPECT_THROW(split_patients(many, {0.8, 0.1, 0.2}, 0), InvalidInput);
}

TEST(ClassWeights, Examples) {
  auto labels = [](int pos, int n) {
    std::vector<std::uint8_t> l(n, 0);
    std::fill(l.begin(), l.begin() + pos, 1);
    return l;
  };
  auto w = class_weights(labels(50, 100));
  EXPECT_DOUBLE_EQ(w.negative, 0.5);
  EXPECT_DOUBLE_EQ(w.positive, 0.5);
  // Oracle: normalize the inverse frequencies directly.
  for (double frac : {0.1, 0.25}) {
    w = class_weights(labels(static_cast<int>(frac * 100), 100));
    const double inv_pos = 1.0 / frac, inv_neg = 1.0 / (1.0 - frac);
    EXPECT_NEAR(w.negative, inv_neg / (inv_pos + inv_neg), 1e-15);
    EXPECT_NEAR(w.positive, inv_pos / (inv_pos + inv_neg), 1e-15);
    EXPECT_NEAR(w.negative, frac, 1e-15);
  }
  EXPECT_THROW(class_weights(labels(0, 10)), InvalidInput);
  EXPECT_THROW(class_weights(labels(10, 10)), InvalidInput);
}

TEST(BuildSamples, TransitionsRespectRule) {
  const auto c = default_cohort();
  const auto eps = sample_cohort(c, 200, 8);
  std::vector<std::size_t> idx(eps.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto stats = fit_standardization(eps, idx, c.registry).stats;
  const auto samples = build_samples(eps, idx, c.registry, stats, AnchorSampling::uniform(5, 2), NextStateRule{48.0, 24.0});
  std::size_t terminal = 0;
  for (const auto& s : samples) {
    const auto& ep = eps[s.episode_index];
    if (s.transition.terminal()) {
      ++terminal;
      EXPECT_EQ(s.transition.reward, ep.outcome == Outcome::death ? 1.0 : 0.0);
    } else {
      EXPECT_GE(s.transition.interval_k, 48.0);
      EXPECT_LE(s.transition.interval_k, 72.0);
    }
    for (std::size_t h = 0; h < kHorizonsDays.size(); ++h)
      EXPECT_EQ(s.mortality[h], mortality_within(ep, s.window().anchor_time, kHorizonsDays[h]));
    EXPECT_TRUE(s.window().true_latent.has_value());
  }
  EXPECT_GT(terminal, 0u);
  EXPECT_LT(terminal, samples.size());
}

}  // namespace
}  // namespace tdsmrp
