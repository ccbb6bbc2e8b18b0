// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "tdsmrp/parallel.hpp"
#include "tdsmrp/rng.hpp"

namespace tdsmrp {

std::size_t horizon_index(double days) {
  for (std::size_t i = 0; i < kHorizonsDays.size(); ++i)
    if (kHorizonsDays[i] == days) return i;
  throw InvalidInput("unsupported mortality horizon " + std::to_string(days) + " days");
}

std::vector<std::size_t> enumerate_anchors(const Episode& episode, const FeatureRegistry& registry,
                                           const AnchorSampling& sampling) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < episode.events.size(); ++i)
    if (!registry.is_demographic(episode.events[i].feature)) eligible.push_back(i);
  if (sampling.mode == AnchorSampling::Mode::thinned) {
    std::vector<std::size_t> kept;
    for (auto i : eligible) {
      Rng rng(sampling.seed, {static_cast<std::uint64_t>(episode.patient_id), i});
      if (rng.uniform() < sampling.fraction) kept.push_back(i);
    }
    return kept;
  }
  if (sampling.mode == AnchorSampling::Mode::all || eligible.size() <= sampling.n) return eligible;

  Rng rng(sampling.seed, {static_cast<std::uint64_t>(episode.patient_id),
                          static_cast<std::uint64_t>(episode.events.size())});
  // Partial Fisher-Yates: the first n slots become a uniform subset.
  for (std::size_t i = 0; i < sampling.n; ++i) {
    const auto j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(sampling.n);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

AnchorSampling parse_anchor_sampling(const std::string& text, std::uint64_t seed) {
  if (text == "all") return AnchorSampling::all();
  const auto colon = text.find(':');
  const std::string mode = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    std::size_t used = 0;
    if (mode == "uniform") {
      const long long n = std::stoll(arg, &used);
      if (used == arg.size() && n > 0) return AnchorSampling::uniform(static_cast<std::size_t>(n), seed);
    } else if (mode == "thinned") {
      const double f = std::stod(arg, &used);
      if (used == arg.size() && f > 0.0 && f <= 1.0) return AnchorSampling::thinned(f, seed);
    }
  } catch (const std::logic_error&) {
  }
  throw InvalidInput("anchor sampling '" + text + "': expected all, uniform:N or thinned:F with 0 < F <= 1");
}

std::string to_string(const AnchorSampling& sampling) {
  switch (sampling.mode) {
    case AnchorSampling::Mode::all: return "all";
    case AnchorSampling::Mode::uniform: return "uniform:" + std::to_string(sampling.n);
    case AnchorSampling::Mode::thinned: {
      std::ostringstream os;
      os << "thinned:" << sampling.fraction;
      return os.str();
    }
  }
  return "all";
}

namespace {

struct Candidate {
  RawEvent event;           // value already clipped
  const RawEvent* previous;  // earlier same-feature candidate, if any
  double time_offset;
  int group;        // 0 anchor/demographic, 1 current infusion rate, 2 rest
  int novelty;      // same-feature candidates that are more recent
  std::size_t order;  // position in time order
};

void check_anchor(const Episode& episode, std::size_t anchor_index,
                  const FeatureRegistry& registry) {
  if (anchor_index >= episode.events.size()) throw InvalidInput("anchor is not an event of the episode");
  if (registry.is_demographic(episode.events[anchor_index].feature))
    throw InvalidInput("demographic events are not state markers");
}

}  // namespace

ObservationWindow assemble_window(const Episode& episode, std::size_t anchor_index,
                                  const FeatureRegistry& registry,
                                  const StandardizationStats& stats, std::size_t max_length) {
  check_anchor(episode, anchor_index, registry);
  if (stats.n_features() != registry.size())
    throw InvalidInput("standardization stats do not match the feature registry");
  const RawEvent& anchor = episode.events[anchor_index];
  const double lo = anchor.time - kLookbackHours;

  // Clipped copies live here so Candidate::previous can point into it.
  std::vector<RawEvent> clipped;
  clipped.reserve(episode.events.size() + 1);
  std::vector<bool> is_anchor;
  bool has_weight = false;
  for (std::size_t i = 0; i < episode.events.size(); ++i) {
    const auto& e = episode.events[i];
    const bool demographic = registry.is_demographic(e.feature);
    if (!demographic && (e.time < lo || e.time > anchor.time)) continue;
    if (e.feature == registry.weight()) has_weight = true;
    RawEvent c = e;
    c.value = stats.bounds[e.feature.index()].clip(e.value);
    clipped.push_back(c);
    is_anchor.push_back(i == anchor_index);
  }
  if (!has_weight) {
    clipped.insert(clipped.begin(), RawEvent{0.0, registry.weight(), stats.imputed_weight(episode.sex)});
    is_anchor.insert(is_anchor.begin(), false);
  }

  std::vector<Candidate> cands;
  cands.reserve(clipped.size());
  std::map<std::int32_t, std::size_t> last_seen;  // feature -> index into cands
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    const RawEvent& e = clipped[i];
    Candidate c{e, nullptr, 0.0, 2, 0, i};
    if (registry.is_demographic(e.feature)) {
      c.group = 0;
      c.time_offset = std::clamp(e.time - anchor.time, -kLookbackHours, 0.0);
    } else {
      c.time_offset = e.time - anchor.time;
      if (is_anchor[i]) c.group = 0;
      auto it = last_seen.find(e.feature.value);
      if (it != last_seen.end()) {
        // Walk back past same-time duplicates to a strictly earlier event.
        for (std::size_t k = it->second + 1; k-- > 0;) {
          if (cands[k].event.feature == e.feature && cands[k].event.time < e.time) {
            c.previous = &clipped[cands[k].order];
            break;
          }
        }
      }
      last_seen[e.feature.value] = cands.size();
    }
    cands.push_back(c);
  }

  if (cands.size() > max_length) {
    std::map<std::int32_t, int> seen;
    for (std::size_t k = cands.size(); k-- > 0;) {
      auto& c = cands[k];
      if (registry.is_demographic(c.event.feature)) continue;
      int& count = seen[c.event.feature.value];
      c.novelty = count++;
      if (c.group == 2 && c.novelty == 0 && registry.kind(c.event.feature) == FeatureKind::infusion_rate)
        c.group = 1;
    }
    std::vector<std::size_t> rank(cands.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = cands[a];
      const auto& y = cands[b];
      if (x.group != y.group) return x.group < y.group;
      if (x.novelty != y.novelty) return x.novelty < y.novelty;
      return x.order > y.order;  // more recent first
    });
    rank.resize(max_length);
    std::sort(rank.begin(), rank.end());
    std::vector<Candidate> kept;
    kept.reserve(max_length);
    for (auto r : rank) kept.push_back(cands[r]);
    cands = std::move(kept);
  }

  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.time_offset != b.time_offset) return a.time_offset < b.time_offset;
    if (a.event.feature != b.event.feature) return a.event.feature < b.event.feature;
    return a.order < b.order;
  });

  ObservationWindow w;
  w.anchor_time = anchor.time;
  w.anchor_feature = anchor.feature;
  w.patient_id = episode.patient_id;
  w.true_latent = episode.latent_state_at(anchor.time);
  w.tuples.reserve(cands.size());
  for (const auto& c : cands) {
    MeasurementTuple raw;
    if (registry.is_demographic(c.event.feature)) {
      raw.value = c.event.value;
      raw.time_offset = c.time_offset;
      raw.feature = c.event.feature;
    } else {
      raw = raw_tuple(c.event, anchor.time, c.previous);
    }
    w.tuples.push_back(standardize(raw, stats));
  }
  return w;
}

void validate(const NextStateRule& rule) {
  if (std::find(kDelaySweepHours.begin(), kDelaySweepHours.end(), rule.delay_x) ==
      kDelaySweepHours.end())
    throw InvalidInput("delay_x must be one of 4, 16, 24, 48, 72, 120 hours");
  if (rule.window_len != 24.0) throw InvalidInput("eligibility window length must be 24 hours");
}

std::optional<std::size_t> select_next_state(const Episode& episode, std::size_t anchor_index,
                                             const FeatureRegistry& registry,
                                             const NextStateRule& rule) {
  check_anchor(episode, anchor_index, registry);
  validate(rule);
  const double open = episode.events[anchor_index].time + rule.delay_x;
  const double close = open + rule.window_len;
  const auto& ev = episode.events;
  auto it = std::lower_bound(ev.begin(), ev.end(), open,
                             [](const RawEvent& e, double t) { return e.time < t; });
  std::optional<std::size_t> best;
  for (; it != ev.end() && it->time <= close; ++it) {
    if (registry.is_demographic(it->feature)) continue;
    const auto idx = static_cast<std::size_t>(it - ev.begin());
    if (!best) {
      best = idx;
      continue;
    }
    if (it->time != ev[*best].time) break;
    if (it->feature < ev[*best].feature) best = idx;
  }
  return best;
}

double order_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidInput("quantile of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto k = static_cast<std::ptrdiff_t>(std::ceil(q * n - 1e-9));
  k = std::clamp<std::ptrdiff_t>(k, 1, static_cast<std::ptrdiff_t>(sorted.size()));
  return sorted[static_cast<std::size_t>(k - 1)];
}

namespace {

struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
};

Moments moments_of(const std::vector<double>& xs, double floor, bool* floored) {
  Moments m;
  if (xs.empty()) {
    m.std = floor;
    if (floored) *floored = true;
    return m;
  }
  // Two-pass for accuracy.
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  m.mean = mean;
  m.std = std::sqrt(var);
  if (!(m.std >= floor)) {
    m.std = floor;
    if (floored) *floored = true;
  }
  return m;
}

}  // namespace

FitResult fit_standardization(std::span<const Episode> episodes,
                              std::span<const std::size_t> train_indices,
                              const FeatureRegistry& registry, const QuantileConfig& config) {
  if (train_indices.empty()) throw InvalidInput("standardization needs a nonempty train set");
  const std::size_t nf = registry.size();
  FitResult result;
  auto& stats = result.stats;
  stats = StandardizationStats::identity(nf);
  stats.female_weight = config.female_weight;
  stats.male_weight = config.male_weight;

  // Raw values per feature, with weight imputed for episodes that lack it.
  std::vector<std::vector<double>> values(nf);
  for (auto idx : train_indices) {
    const Episode& ep = episodes[idx];
    bool has_weight = false;
    for (const auto& e : ep.events) {
      values[e.feature.index()].push_back(e.value);
      if (e.feature == registry.weight()) has_weight = true;
    }
    if (!has_weight) values[registry.weight().index()].push_back(stats.imputed_weight(ep.sex));
  }

  for (std::size_t f = 0; f < nf; ++f) {
    const FeatureId id(static_cast<std::int32_t>(f));
    const auto kind = registry.kind(id);
    if (kind == FeatureKind::demographic || values[f].empty()) continue;
    std::vector<double> sorted = values[f];
    std::sort(sorted.begin(), sorted.end());
    const bool lab = kind == FeatureKind::lab;
    stats.bounds[f].low = order_quantile(sorted, lab ? config.lab_low : config.drug_low);
    stats.bounds[f].high = order_quantile(sorted, lab ? config.lab_high : config.drug_high);
  }

  // Deltas between consecutive same-feature events no more than 7 days apart.
  std::vector<std::vector<double>> deltas(nf);
  std::vector<double> delta_times;
  for (auto idx : train_indices) {
    const Episode& ep = episodes[idx];
    std::map<std::int32_t, RawEvent> last;
    for (const auto& e : ep.events) {
      if (registry.is_demographic(e.feature)) continue;
      const auto& b = stats.bounds[e.feature.index()];
      auto it = last.find(e.feature.value);
      if (it != last.end()) {
        const double dt = e.time - it->second.time;
        if (dt > 0.0 && dt <= kLookbackHours) {
          deltas[e.feature.index()].push_back(b.clip(e.value) - b.clip(it->second.value));
          delta_times.push_back(dt);
        }
      }
      if (it == last.end() || e.time > it->second.time) last[e.feature.value] = e;
    }
  }

  // Pooled time offsets over a deterministic subsample of windows.
  std::vector<double> offsets;
  for (auto idx : train_indices) {
    const Episode& ep = episodes[idx];
    for (auto a : enumerate_anchors(ep, registry, config.time_anchors)) {
      const double at = ep.events[a].time;
      int demographics = 0;
      for (const auto& e : ep.events) {
        if (registry.is_demographic(e.feature)) {
          ++demographics;
          offsets.push_back(std::clamp(e.time - at, -kLookbackHours, 0.0));
        } else if (e.time >= at - kLookbackHours && e.time <= at) {
          offsets.push_back(e.time - at);
        }
      }
      if (demographics < 3) offsets.push_back(std::max(-at, -kLookbackHours));  // imputed weight
    }
  }

  for (std::size_t f = 0; f < nf; ++f) {
    const FeatureId id(static_cast<std::int32_t>(f));
    std::vector<double> clipped = values[f];
    for (auto& v : clipped) v = stats.bounds[f].clip(v);
    bool floored = false;
    stats.value[f] = moments_of(clipped, config.std_floor, &floored);
    if (values[f].empty()) result.report.unobserved.push_back(id);
    if (floored) result.report.floored.push_back(id);
    if (registry.kind(id) != FeatureKind::demographic)
      stats.delta_value[f] = moments_of(deltas[f], config.std_floor, nullptr);
  }
  stats.delta_time = moments_of(delta_times, config.std_floor, nullptr);
  stats.time_offset = moments_of(offsets, config.std_floor, nullptr);
  return result;
}

Split split_patients(std::span<const Episode> episodes, std::array<double, 3> fractions,
                     std::uint64_t seed) {
  for (double f : fractions)
    if (!(f >= 0.0) || !std::isfinite(f)) throw InvalidInput("split fractions must be nonnegative");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw InvalidInput("split fractions must sum to 1");

  std::vector<std::int64_t> patients;
  patients.reserve(episodes.size());
  for (const auto& e : episodes) patients.push_back(e.patient_id);
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  const std::size_t n = patients.size();
  if (n < 3) throw InvalidInput("fewer patients than folds");

  // Largest-remainder apportionment, then at least one patient per fold.
  std::array<std::size_t, 3> count{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    count[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(count[k]);
    assigned += count[k];
  }
  while (assigned < n) {
    const auto k = static_cast<std::size_t>(
        std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++count[k];
    remainder[k] = -1.0;
    ++assigned;
  }
  for (int k = 0; k < 3; ++k) {
    if (count[k] > 0) continue;
    const auto donor = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
    --count[donor];
    ++count[k];
  }

  Rng rng(seed, {0x5917ULL});
  shuffle(patients, rng);
  std::map<std::int64_t, Fold> fold_of;
  for (std::size_t i = 0; i < n; ++i)
    fold_of[patients[i]] = i < count[0] ? Fold::train
                           : i < count[0] + count[1] ? Fold::validation
                                                     : Fold::test;
  Split split;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    switch (fold_of[episodes[i].patient_id]) {
      case Fold::train: split.train.push_back(i); break;
      case Fold::validation: split.validation.push_back(i); break;
      case Fold::test: split.test.push_back(i); break;
    }
  }
  return split;
}

ClassWeights class_weights(std::span<const std::uint8_t> labels) {
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidInput("class weights need both classes present");
  const double n = static_cast<double>(labels.size());
  const double inv_pos = n / static_cast<double>(pos);
  const double inv_neg = n / static_cast<double>(neg);
  return {inv_neg / (inv_pos + inv_neg), inv_pos / (inv_pos + inv_neg)};
}

std::vector<Sample> build_samples(std::span<const Episode> episodes,
                                  std::span<const std::size_t> indices,
                                  const FeatureRegistry& registry,
                                  const StandardizationStats& stats,
                                  const AnchorSampling& sampling,
                                  const std::optional<NextStateRule>& rule) {
  if (rule) validate(*rule);
  std::vector<std::vector<Sample>> per_episode(indices.size());
  parallel_for(indices.size(), [&](std::size_t k) {
    const std::size_t idx = indices[k];
    const Episode& ep = episodes[idx];
    for (auto a : enumerate_anchors(ep, registry, sampling)) {
      Sample s;
      s.episode_index = idx;
      s.died = ep.outcome == Outcome::death;
      const double at = ep.events[a].time;
      for (std::size_t h = 0; h < kHorizonsDays.size(); ++h)
        s.mortality[h] = mortality_within(ep, at, kHorizonsDays[h]) ? 1 : 0;
      s.transition.current = assemble_window(ep, a, registry, stats);
      if (rule) {
        if (auto next = select_next_state(ep, a, registry, *rule)) {
          s.transition.next = assemble_window(ep, *next, registry, stats);
          s.transition.interval_k = ep.events[*next].time - at;
        } else {
          s.transition.reward = RewardSpec::terminal_reward(ep.outcome);
        }
      }
      per_episode[k].push_back(std::move(s));
    }
  });
  std::vector<Sample> out;
  for (auto& v : per_episode)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

}  // namespace tdsmrp
