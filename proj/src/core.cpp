// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tdsmrp {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::lab: return "lab";
    case FeatureKind::infusion_rate: return "infusion-rate";
    case FeatureKind::bolus: return "bolus";
    case FeatureKind::demographic: return "demographic";
  }
  return "lab";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "lab") return FeatureKind::lab;
  if (text == "infusion-rate" || text == "infusion") return FeatureKind::infusion_rate;
  if (text == "bolus") return FeatureKind::bolus;
  if (text == "demographic") return FeatureKind::demographic;
  throw InvalidInput("unknown feature kind '" + std::string(text) + "'");
}

std::string_view to_string(Sex sex) { return sex == Sex::female ? "F" : "M"; }
std::string_view to_string(Outcome outcome) {
  return outcome == Outcome::death ? "death" : "discharge";
}

FeatureRegistry::FeatureRegistry(std::vector<FeatureInfo> features)
    : features_(std::move(features)) {
  std::set<std::string> names;
  std::optional<FeatureId> age, sex, weight;
  int n_demographic = 0;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    if (!names.insert(f.name).second) throw InvalidInput("duplicate feature name '" + f.name + "'");
    if (f.kind != FeatureKind::demographic) continue;
    ++n_demographic;
    const FeatureId id(static_cast<std::int32_t>(i));
    if (f.name == "age") age = id;
    else if (f.name == "sex") sex = id;
    else if (f.name == "weight") weight = id;
    else throw InvalidInput("demographic feature must be age, sex or weight, got '" + f.name + "'");
  }
  if (n_demographic != 3 || !age || !sex || !weight)
    throw InvalidInput("feature registry must contain exactly age, sex and weight as demographics");
  age_ = *age;
  sex_ = *sex;
  weight_ = *weight;
}

FeatureRegistry FeatureRegistry::with_demographics(std::vector<FeatureInfo> features) {
  std::vector<FeatureInfo> all{{"age", FeatureKind::demographic},
                               {"sex", FeatureKind::demographic},
                               {"weight", FeatureKind::demographic}};
  all.insert(all.end(), features.begin(), features.end());
  return FeatureRegistry(std::move(all));
}

std::optional<FeatureId> FeatureRegistry::find(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return FeatureId(static_cast<std::int32_t>(i));
  return std::nullopt;
}

std::optional<int> Episode::latent_state_at(double time) const {
  if (latent_path.empty() || time < latent_path.front().enter_time) return std::nullopt;
  auto it = std::upper_bound(latent_path.begin(), latent_path.end(), time,
                             [](double t, const LatentSegment& s) { return t < s.enter_time; });
  return std::prev(it)->state;
}

void validate(const Episode& episode) {
  if (!(episode.end_time >= 0.0) || !std::isfinite(episode.end_time))
    throw InvalidInput("episode end_time must be finite and nonnegative");
  for (std::size_t i = 0; i < episode.events.size(); ++i) {
    const auto& e = episode.events[i];
    if (!std::isfinite(e.time) || !std::isfinite(e.value))
      throw InvalidInput("episode contains a non-finite event");
    if (e.time < 0.0 || e.time > episode.end_time)
      throw InvalidInput("event time outside [0, end_time]");
    if (i > 0 && e.time < episode.events[i - 1].time)
      throw InvalidInput("episode events are not sorted by time");
  }
  const auto& path = episode.latent_path;
  if (!path.empty()) {
    if (path.front().enter_time != 0.0) throw InvalidInput("latent path must start at time 0");
    for (std::size_t i = 1; i < path.size(); ++i)
      if (path[i].enter_time < path[i - 1].enter_time)
        throw InvalidInput("latent path is not time-ordered");
    if (path.back().enter_time != episode.end_time)
      throw InvalidInput("latent path must end in an absorbing state at end_time");
  }
}

bool mortality_within(const Episode& episode, double state_time, double horizon_days) {
  if (episode.outcome != Outcome::death) return false;
  return episode.end_time - state_time <= horizon_days * kHoursPerDay;
}

StandardizationStats StandardizationStats::identity(std::size_t n_features) {
  StandardizationStats s;
  s.value.assign(n_features, Moments{});
  s.delta_value.assign(n_features, Moments{});
  s.bounds.assign(n_features, OutlierBounds{});
  return s;
}

MeasurementTuple raw_tuple(const RawEvent& event, double anchor_time, const RawEvent* previous) {
  if (event.time > anchor_time) throw InvalidInput("event occurs after the anchor");
  MeasurementTuple t;
  t.value = event.value;
  t.time_offset = event.time - anchor_time;
  t.feature = event.feature;
  if (previous != nullptr) {
    if (previous->feature != event.feature)
      throw InvalidInput("previous event belongs to a different feature");
    if (!(previous->time < event.time))
      throw InvalidInput("previous event must be strictly earlier than the event");
    t.delta_value = event.value - previous->value;
    t.delta_time = event.time - previous->time;
    t.has_delta = true;
  }
  return t;
}

namespace {
double z(double x, const Moments& m) { return (x - m.mean) / m.std; }
double unz(double x, const Moments& m) { return x * m.std + m.mean; }
}  // namespace

MeasurementTuple standardize(const MeasurementTuple& raw, const StandardizationStats& stats) {
  const auto f = raw.feature.index();
  if (f >= stats.n_features()) throw InvalidInput("feature id outside standardization stats");
  MeasurementTuple s = raw;
  s.value = z(raw.value, stats.value[f]);
  s.time_offset = z(raw.time_offset, stats.time_offset);
  if (raw.has_delta) {
    s.delta_value = z(raw.delta_value, stats.delta_value[f]);
    s.delta_time = z(raw.delta_time, stats.delta_time);
  } else {
    s.delta_value = 0.0;
    s.delta_time = 0.0;
  }
  return s;
}

MeasurementTuple destandardize(const MeasurementTuple& standardized,
                               const StandardizationStats& stats) {
  const auto f = standardized.feature.index();
  if (f >= stats.n_features()) throw InvalidInput("feature id outside standardization stats");
  MeasurementTuple r = standardized;
  r.value = unz(standardized.value, stats.value[f]);
  r.time_offset = unz(standardized.time_offset, stats.time_offset);
  if (standardized.has_delta) {
    r.delta_value = unz(standardized.delta_value, stats.delta_value[f]);
    r.delta_time = unz(standardized.delta_time, stats.delta_time);
  }
  return r;
}

}  // namespace tdsmrp
