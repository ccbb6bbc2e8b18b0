// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "tdsmrp/eval.hpp"
#include "tdsmrp/rng.hpp"

namespace tdsmrp {
namespace {

using Labels = std::vector<std::uint8_t>;

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, Labels{0, 0, 1, 1}), 0.75);
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.2, 0.3}, Labels{0, 1, 1}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.3, 0.2, 0.1}, Labels{0, 1, 1}), 0.0);
  EXPECT_EQ(auroc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, Labels{0, 1, 0, 1}), 0.5);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, Labels{1, 1}), InvalidInput);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, Labels{0, 0}), InvalidInput);
  EXPECT_THROW(auroc(std::vector<double>{0.1}, Labels{0, 1}), InvalidInput);
}

struct Instance {
  std::vector<double> scores;
  Labels labels;
};

Instance random_instance(Rng& rng) {
  Instance x;
  const std::size_t n = 2 + rng.below(300);
  const bool ties = rng.uniform() < 0.5;
  for (std::size_t i = 0; i < n; ++i) {
    x.labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
    const double s = rng.normal() + x.labels.back();
    x.scores.push_back(ties ? std::round(s * 4.0) / 4.0 : s);
  }
  x.labels[0] = 1;
  x.labels[1] = 0;
  return x;
}

TEST(Auroc, EqualsPairCountingProperty) {
  Rng rng(31);
  for (int k = 0; k < 200; ++k) {
    const auto x = random_instance(rng);
    EXPECT_NEAR(auroc(x.scores, x.labels), testing::brute_force_auroc(x.scores, x.labels), 1e-12);
  }
}

TEST(Auroc, MonotoneTransformAndNegationProperty) {
  Rng rng(32);
  for (int k = 0; k < 50; ++k) {
    const auto x = random_instance(rng);
    std::vector<double> squashed, negated;
    for (double s : x.scores) {
      squashed.push_back(1.0 / (1.0 + std::exp(-s)));
      negated.push_back(-s);
    }
    const double a = auroc(x.scores, x.labels);
    EXPECT_NEAR(auroc(squashed, x.labels), a, 1e-12);
    EXPECT_NEAR(auroc(negated, x.labels), 1.0 - a, 1e-12);
  }
}

TEST(PairedT, ClosedFormTwoDegreesOfFreedom) {
  // Differences 1, 2, 3: mean 2, sd 1, t = 2 sqrt(3). For df = 2 the upper
  // tail is (1 - t / sqrt(t^2 + 2)) / 2.
  const std::vector<double> a{1.0, 2.0, 3.0}, b{0.0, 0.0, 0.0};
  const auto r = paired_t_one_tailed(a, b);
  const double t = 2.0 * std::sqrt(3.0);
  EXPECT_NEAR(r.t, t, 1e-12);
  EXPECT_NEAR(r.p, 0.5 * (1.0 - t / std::sqrt(t * t + 2.0)), 1e-12);
  EXPECT_FALSE(r.degenerate);
  const auto flipped = paired_t_one_tailed(b, a);
  EXPECT_NEAR(flipped.p, 1.0 - r.p, 1e-12);
}

TEST(PairedT, MatchesQuadratureOfDensity) {
  Rng rng(7);
  for (std::size_t n : {3u, 5u, 10u}) {
    for (int k = 0; k < 5; ++k) {
      std::vector<double> a, b;
      for (std::size_t i = 0; i < n; ++i) {
        a.push_back(0.8 + 0.02 * rng.normal());
        b.push_back(0.79 + 0.02 * rng.normal());
      }
      const auto r = paired_t_one_tailed(a, b);
      EXPECT_NEAR(r.p, testing::t_upper_tail_quadrature(r.t, static_cast<double>(n - 1)), 1e-8);
    }
  }
}

TEST(PairedT, DegenerateCases) {
  const std::vector<double> a{0.8, 0.7, 0.9}, same = a;
  auto r = paired_t_one_tailed(a, same);
  EXPECT_EQ(r.p, 0.5);
  EXPECT_FALSE(r.degenerate);
  const std::vector<double> shifted{0.7, 0.6, 0.8};
  r = paired_t_one_tailed(a, shifted);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.p, 0.0);
  r = paired_t_one_tailed(shifted, a);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_THROW(paired_t_one_tailed(std::vector<double>{1.0}, std::vector<double>{0.0}), InvalidInput);
  EXPECT_THROW(paired_t_one_tailed(a, std::vector<double>{1.0, 2.0}), InvalidInput);
}

TEST(BenjaminiYekutieli, Examples) {
  const auto r = benjamini_yekutieli(std::vector<double>{0.01, 0.02, 0.04});
  EXPECT_NEAR(r.adjusted[0], 0.055, 1e-12);
  EXPECT_NEAR(r.adjusted[1], 0.055, 1e-12);
  EXPECT_NEAR(r.adjusted[2], 0.22 / 3.0, 1e-12);
  EXPECT_EQ(r.rejected, (std::vector<bool>{false, false, false}));
  EXPECT_EQ(benjamini_yekutieli(std::vector<double>{0.03}).adjusted[0], 0.03);
  EXPECT_TRUE(benjamini_yekutieli(std::vector<double>{0.03}).rejected[0]);
  const auto ones = benjamini_yekutieli(std::vector<double>{1.0, 1.0, 1.0, 1.0});
  for (double p : ones.adjusted) EXPECT_EQ(p, 1.0);
  EXPECT_TRUE(benjamini_yekutieli(std::vector<double>{}).adjusted.empty());
  EXPECT_THROW(benjamini_yekutieli(std::vector<double>{0.5, 1.2}), InvalidInput);
}

TEST(BenjaminiYekutieli, MatchesDirectFormulaProperty) {
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> p(1 + rng.below(40));
    for (auto& x : p) x = rng.uniform() < 0.3 ? rng.uniform(0.0, 0.01) : rng.uniform();
    const auto fast = benjamini_yekutieli(p);
    const auto direct = testing::by_step_up_direct(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(fast.adjusted[i], direct[i], 1e-12);
      EXPECT_GE(fast.adjusted[i], p[i]);
      EXPECT_LE(fast.adjusted[i], 1.0);
    }
    // Adjusted values keep the order of the raw values.
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p.size(); ++j)
        if (p[i] <= p[j]) EXPECT_LE(fast.adjusted[i], fast.adjusted[j]);
  }
}

struct EvalFixture {
  CohortConfig cohort = default_cohort();
  std::vector<Episode> episodes;
  std::vector<Sample> samples;
  std::vector<ModelRuns> runs;
};

const EvalFixture& eval_fixture() {
  static const EvalFixture f = [] {
    EvalFixture f;
    f.episodes = sample_cohort(f.cohort, 400, 3);
    std::vector<std::size_t> all(f.episodes.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto stats = fit_standardization(f.episodes, all, f.cohort.registry).stats;
    f.samples = build_samples(f.episodes, all, f.cohort.registry, stats, AnchorSampling::uniform(2, 1),
                              std::nullopt);
    const auto cfg = testing::small_model_config(static_cast<int>(f.cohort.registry.size()));
    for (const char* label : {"td24", "sup1", "sup28"}) {
      ModelRuns r;
      r.label = label;
      r.is_td = label[0] == 't';
      for (std::uint64_t s : {0u, 1u, 2u}) {
        r.seeds.push_back(s);
        r.models.push_back(ValueModel<double>::initialized(cfg, s * 10 + static_cast<std::uint64_t>(label[3])));
      }
      f.runs.push_back(r);
    }
    return f;
  }();
  return f;
}

TEST(EvaluateAll, GridComparisonsAndOracle) {
  const auto& f = eval_fixture();
  const std::vector<EvalDataset> ds{{"internal", f.samples, absorption_probability(f.cohort)},
                                    {"copy", f.samples, std::nullopt}};
  const auto rep = evaluate_all(f.runs, ds);
  EXPECT_EQ(rep.grid.size(), 2u * 3u * kHorizonsDays.size());
  EXPECT_EQ(rep.comparisons.size(), 2u * 2u * kHorizonsDays.size());
  ASSERT_EQ(rep.oracle.size(), 1u);
  EXPECT_EQ(rep.oracle[0].model, "td24");
  EXPECT_EQ(rep.oracle[0].mae.size(), 3u);

  // Cell values recomputed from scratch.
  std::vector<const ObservationWindow*> w;
  for (const auto& s : f.samples) w.push_back(&s.window());
  const auto p = predict(f.runs[1].models[2], std::span<const ObservationWindow* const>(w));
  Labels l;
  for (const auto& s : f.samples) l.push_back(s.mortality[horizon_index(7.0)]);
  const auto& cell = rep.cell("sup1", "copy", 7.0);
  EXPECT_NEAR(cell.per_seed[2], testing::brute_force_auroc(p, l), 1e-12);
  EXPECT_EQ(cell.per_seed.size(), 3u);
  EXPECT_THROW(rep.cell("sup3", "copy", 7.0), InvalidInput);

  // One adjustment family over every comparison.
  std::vector<double> raw;
  for (const auto& c : rep.comparisons) raw.push_back(c.p_raw);
  const auto adj = benjamini_yekutieli(raw);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_EQ(rep.comparisons[i].p_adjusted, adj.adjusted[i]);
}

TEST(EvaluateAll, MissingSeedFails) {
  const auto& f = eval_fixture();
  auto runs = f.runs;
  runs[2].seeds.pop_back();
  runs[2].models.pop_back();
  const std::vector<EvalDataset> ds{{"internal", f.samples, std::nullopt}};
  try {
    evaluate_all(runs, ds);
    FAIL() << "expected EvaluationFailure";
  } catch (const EvaluationFailure& e) {
    EXPECT_NE(std::string(e.what()).find("sup28"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(evaluate_all(std::vector<ModelRuns>{}, ds), EvaluationFailure);
}

TEST(EvaluateAll, SingleSeedHasNoComparisons) {
  const auto& f = eval_fixture();
  auto runs = f.runs;
  for (auto& r : runs) {
    r.seeds.resize(1);
    r.models.resize(1);
  }
  const std::vector<EvalDataset> ds{{"internal", f.samples, std::nullopt}};
  const auto rep = evaluate_all(runs, ds);
  EXPECT_TRUE(rep.comparisons.empty());
  EXPECT_EQ(rep.grid.front().std, 0.0);
}

TEST(OracleError, Examples) {
  std::vector<Sample> s(3);
  s[0].transition.current.true_latent = 0;
  s[1].transition.current.true_latent = 1;
  s[2].transition.current.true_latent = 1;
  Eigen::VectorXd v(2);
  v << 0.2, 0.6;
  const auto e = oracle_error(std::vector<double>{0.3, 0.6, 0.3}, s, v);
  EXPECT_NEAR(e.mae, (0.1 + 0.0 + 0.3) / 3.0, 1e-15);
  EXPECT_NEAR(e.max_error, 0.3, 1e-15);
  s[2].transition.current.true_latent.reset();
  EXPECT_THROW(oracle_error(std::vector<double>{0.3, 0.6, 0.3}, s, v), InvalidInput);
}

}  // namespace
}  // namespace tdsmrp
