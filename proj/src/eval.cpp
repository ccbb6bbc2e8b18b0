// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

namespace tdsmrp {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("auroc: length mismatch");
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw InvalidInput("auroc: NaN score");
    if (labels[i] > 1) throw InvalidInput("auroc: labels must be 0 or 1");
    n_pos += labels[i];
  }
  const std::uint64_t n = scores.size();
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidInput("auroc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of positives; tied blocks share their average rank, so
  // the doubled value stays integral.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_rank = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) doubled_rank_sum += labels[order[k]] * doubled_rank;
    i = j + 1;
  }
  const std::uint64_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

PairedTest paired_t_one_tailed(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("paired t-test: length mismatch");
  if (a.size() < 2) throw InvalidInput("paired t-test: at least two pairs are required");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  PairedTest out;
  if (!std::isfinite(mean) || !std::isfinite(sd)) throw InvalidInput("paired t-test: non-finite input");
  if (sd <= 1e-12 * std::abs(mean) || sd == 0.0) {
    if (mean == 0.0) return out;
    out.degenerate = true;
    out.t = mean > 0.0 ? INFINITY : -INFINITY;
    out.p = mean > 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  out.p = boost::math::cdf(boost::math::complement(dist, out.t));
  return out;
}

AdjustedPValues benjamini_yekutieli(std::span<const double> p_values, double q) {
  const std::size_t m = p_values.size();
  AdjustedPValues out;
  out.adjusted.assign(m, 1.0);
  out.rejected.assign(m, false);
  if (m == 0) return out;
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("benjamini_yekutieli: p-value outside [0,1]");
  double c = 0.0;
  for (std::size_t k = 1; k <= m; ++k) c += 1.0 / static_cast<double>(k);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double scaled = static_cast<double>(m) * c * p_values[order[r]] / static_cast<double>(r + 1);
    running = std::min(running, std::min(1.0, scaled));
    out.adjusted[order[r]] = running;
  }
  for (std::size_t i = 0; i < m; ++i) out.rejected[i] = out.adjusted[i] <= q;
  return out;
}

const GridCell& EvalReport::cell(const std::string& model, const std::string& dataset,
                                 double horizon_days) const {
  for (const auto& c : grid)
    if (c.model == model && c.dataset == dataset && c.horizon_days == horizon_days) return c;
  throw InvalidInput("report has no cell for " + model + "/" + dataset);
}

OracleError oracle_error(std::span<const double> predictions, std::span<const Sample> samples,
                         const Eigen::VectorXd& oracle) {
  if (predictions.size() != samples.size()) throw InvalidInput("oracle_error: length mismatch");
  if (samples.empty()) throw InvalidInput("oracle_error: no samples");
  OracleError out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& latent = samples[i].window().true_latent;
    if (!latent || *latent < 0 || *latent >= oracle.size())
      throw InvalidInput("oracle_error: sample without a transient latent state");
    const double err = std::abs(predictions[i] - oracle[*latent]);
    out.mae += err;
    out.max_error = std::max(out.max_error, err);
  }
  out.mae /= static_cast<double>(samples.size());
  return out;
}

EvalReport evaluate_all(std::span<const ModelRuns> runs, std::span<const EvalDataset> datasets) {
  if (runs.empty()) throw EvaluationFailure("no models to evaluate");
  if (datasets.empty()) throw EvaluationFailure("no datasets to evaluate");

  EvalReport report;
  std::set<std::uint64_t> all_seeds;
  for (const auto& r : runs) {
    if (r.models.size() != r.seeds.size())
      throw EvaluationFailure("model " + r.label + ": seed list and checkpoints differ in length");
    all_seeds.insert(r.seeds.begin(), r.seeds.end());
  }
  for (const auto& r : runs) {
    std::set<std::uint64_t> have(r.seeds.begin(), r.seeds.end());
    std::string missing;
    for (auto s : all_seeds)
      if (!have.count(s)) missing += (missing.empty() ? "" : ",") + std::to_string(s);
    if (!missing.empty())
      throw EvaluationFailure("model " + r.label + " is missing seeds " + missing);
    report.models.push_back(r.label);
  }
  report.seeds.assign(all_seeds.begin(), all_seeds.end());

  const ModelRuns* td = nullptr;
  for (const auto& r : runs)
    if (r.is_td) {
      td = &r;
      break;
    }

  for (const auto& ds : datasets) {
    report.datasets.push_back(ds.name);
    if (ds.samples.empty()) throw EvaluationFailure("dataset " + ds.name + " has no samples");
    std::vector<const ObservationWindow*> windows(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) windows[i] = &ds.samples[i].window();
    std::vector<std::vector<std::uint8_t>> labels(kHorizonsDays.size());
    for (std::size_t h = 0; h < kHorizonsDays.size(); ++h) {
      labels[h].resize(ds.samples.size());
      std::size_t pos = 0;
      for (std::size_t i = 0; i < ds.samples.size(); ++i) pos += labels[h][i] = ds.samples[i].mortality[h];
      if (pos == 0 || pos == ds.samples.size())
        throw EvaluationFailure("dataset " + ds.name + " has a single class at " +
                                std::to_string(static_cast<int>(kHorizonsDays[h])) + " days");
    }
    const bool has_oracle =
        ds.oracle && std::all_of(ds.samples.begin(), ds.samples.end(),
                                 [](const Sample& s) { return s.window().true_latent.has_value(); });

    for (const auto& r : runs) {
      std::vector<GridCell> cells(kHorizonsDays.size());
      OracleMetrics om{ds.name, r.label, {}, {}};
      for (std::size_t h = 0; h < kHorizonsDays.size(); ++h) {
        cells[h].model = r.label;
        cells[h].dataset = ds.name;
        cells[h].horizon_days = kHorizonsDays[h];
      }
      for (auto seed : report.seeds) {
        const auto at = std::find(r.seeds.begin(), r.seeds.end(), seed) - r.seeds.begin();
        const auto preds = predict(r.models[static_cast<std::size_t>(at)],
                                   std::span<const ObservationWindow* const>(windows));
        for (double p : preds)
          if (!std::isfinite(p))
            throw EvaluationFailure("model " + r.label + " seed " + std::to_string(seed) +
                                    " produced a non-finite score");
        for (std::size_t h = 0; h < kHorizonsDays.size(); ++h)
          cells[h].per_seed.push_back(auroc(preds, labels[h]));
        if (has_oracle && r.is_td) {
          const auto err = oracle_error(preds, ds.samples, *ds.oracle);
          om.mae.push_back(err.mae);
          om.max_error.push_back(err.max_error);
        }
      }
      for (auto& c : cells) {
        const auto k = static_cast<double>(c.per_seed.size());
        c.mean = std::accumulate(c.per_seed.begin(), c.per_seed.end(), 0.0) / k;
        double ss = 0.0;
        for (double v : c.per_seed) ss += (v - c.mean) * (v - c.mean);
        c.std = c.per_seed.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
        report.grid.push_back(std::move(c));
      }
      if (!om.mae.empty()) report.oracle.push_back(std::move(om));
    }
  }

  if (td && report.seeds.size() >= 2) {
    std::vector<double> raw;
    for (const auto& ds : report.datasets)
      for (const auto& r : runs) {
        if (r.is_td) continue;
        for (double h : kHorizonsDays) {
          const auto& a = report.cell(td->label, ds, h);
          const auto& b = report.cell(r.label, ds, h);
          const PairedTest t = paired_t_one_tailed(a.per_seed, b.per_seed);
          report.comparisons.push_back({r.label, ds, h, t.t, t.p, 1.0, t.degenerate});
          raw.push_back(t.p);
        }
      }
    const auto adj = benjamini_yekutieli(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) report.comparisons[i].p_adjusted = adj.adjusted[i];
  }
  return report;
}

}  // namespace tdsmrp
