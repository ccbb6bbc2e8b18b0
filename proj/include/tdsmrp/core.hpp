// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every stage: feature registry, raw episodes,
// measurement tuples and the label arithmetic used for mortality horizons.

#ifndef TDSMRP_CORE_HPP
#define TDSMRP_CORE_HPP

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdsmrp {

/// Input that violates a documented contract (bad config, malformed file,
/// precondition failure). Maps to CLI exit code 2.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kHoursPerDay = 24.0;
inline constexpr double kLookbackHours = 168.0;

struct FeatureId {
  std::int32_t value = 0;

  constexpr FeatureId() = default;
  constexpr explicit FeatureId(std::int32_t v) : value(v) {}
  constexpr std::size_t index() const { return static_cast<std::size_t>(value); }
  friend constexpr auto operator<=>(FeatureId, FeatureId) = default;
};

enum class FeatureKind { lab, infusion_rate, bolus, demographic };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

struct FeatureInfo {
  std::string name;
  FeatureKind kind = FeatureKind::lab;

  friend bool operator==(const FeatureInfo&, const FeatureInfo&) = default;
};

/// Dense 0..F-1 feature table. The demographic kind holds exactly the three
/// features named "age", "sex" and "weight".
class FeatureRegistry {
 public:
  FeatureRegistry() = default;
  explicit FeatureRegistry(std::vector<FeatureInfo> features);

  /// Registry with age/sex/weight at ids 0..2 followed by `features`.
  static FeatureRegistry with_demographics(std::vector<FeatureInfo> features);

  std::size_t size() const { return features_.size(); }
  const FeatureInfo& operator[](FeatureId id) const { return features_.at(id.index()); }
  FeatureKind kind(FeatureId id) const { return (*this)[id].kind; }
  bool is_demographic(FeatureId id) const { return kind(id) == FeatureKind::demographic; }
  std::optional<FeatureId> find(std::string_view name) const;
  const std::vector<FeatureInfo>& features() const { return features_; }

  FeatureId age() const { return age_; }
  FeatureId sex() const { return sex_; }
  FeatureId weight() const { return weight_; }

  friend bool operator==(const FeatureRegistry& a, const FeatureRegistry& b) {
    return a.features_ == b.features_;
  }

 private:
  std::vector<FeatureInfo> features_;
  FeatureId age_, sex_, weight_;
};

enum class Sex { female, male };
enum class Outcome { death, discharge };

std::string_view to_string(Sex sex);
std::string_view to_string(Outcome outcome);

struct RawEvent {
  double time = 0.0;  // hours since admission
  FeatureId feature;
  double value = 0.0;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

/// Event order used everywhere: ascending time, then ascending feature id.
inline bool event_before(const RawEvent& a, const RawEvent& b) {
  if (a.time != b.time) return a.time < b.time;
  return a.feature < b.feature;
}

struct LatentSegment {
  double enter_time = 0.0;
  int state = 0;

  friend bool operator==(const LatentSegment&, const LatentSegment&) = default;
};

struct Episode {
  std::int64_t patient_id = 0;
  Sex sex = Sex::female;
  double age = 0.0;
  std::optional<double> weight;
  std::vector<RawEvent> events;
  Outcome outcome = Outcome::discharge;
  double end_time = 0.0;
  // Simulator ground truth; empty when unknown.
  std::vector<LatentSegment> latent_path;

  /// Latent state occupied at `time`, if a path is recorded.
  std::optional<int> latent_state_at(double time) const;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Throws InvalidInput when events are unsorted, exceed end_time or the
/// latent path is malformed.
void validate(const Episode& episode);

/// Terminal reward, interim reward and discount of the mortality process.
/// Only gamma = 1 with zero interim reward is supported.
struct RewardSpec {
  static constexpr double gamma = 1.0;
  static constexpr double interim_reward = 0.0;
  static constexpr double terminal_reward(Outcome outcome) {
    return outcome == Outcome::death ? 1.0 : 0.0;
  }
};

/// True iff the episode ends in death within `horizon_days` of `state_time`.
bool mortality_within(const Episode& episode, double state_time, double horizon_days);

/// One encoded measurement {v, t, f, dv, dt}. The same struct carries raw
/// (hours, native units) and standardized values; see standardize().
struct MeasurementTuple {
  double value = 0.0;
  double time_offset = 0.0;
  FeatureId feature;
  double delta_value = 0.0;
  double delta_time = 0.0;
  bool has_delta = false;

  friend bool operator==(const MeasurementTuple&, const MeasurementTuple&) = default;
};

struct Moments {
  double mean = 0.0;
  double std = 1.0;

  friend bool operator==(const Moments&, const Moments&) = default;
};

struct OutlierBounds {
  double low = -std::numeric_limits<double>::infinity();
  double high = std::numeric_limits<double>::infinity();

  double clip(double v) const { return v < low ? low : (v > high ? high : v); }
  friend bool operator==(const OutlierBounds&, const OutlierBounds&) = default;
};

/// Train-set statistics. v and dv are per feature; t and dt are pooled.
struct StandardizationStats {
  std::vector<Moments> value;
  std::vector<Moments> delta_value;
  Moments time_offset;
  Moments delta_time;
  std::vector<OutlierBounds> bounds;
  double female_weight = 74.0;
  double male_weight = 86.0;

  /// Zero-mean, unit-std, unbounded statistics for `n_features`.
  static StandardizationStats identity(std::size_t n_features);

  std::size_t n_features() const { return value.size(); }
  double imputed_weight(Sex sex) const { return sex == Sex::female ? female_weight : male_weight; }

  friend bool operator==(const StandardizationStats&, const StandardizationStats&) = default;
};

/// Raw tuple for `event` relative to `anchor_time`. `previous` must be an
/// earlier event of the same feature. Throws InvalidInput otherwise.
MeasurementTuple raw_tuple(const RawEvent& event, double anchor_time, const RawEvent* previous);

MeasurementTuple standardize(const MeasurementTuple& raw, const StandardizationStats& stats);
MeasurementTuple destandardize(const MeasurementTuple& standardized,
                               const StandardizationStats& stats);

inline MeasurementTuple make_tuple(const RawEvent& event, double anchor_time,
                                   const RawEvent* previous,
                                   const StandardizationStats& stats) {
  return standardize(raw_tuple(event, anchor_time, previous), stats);
}

}  // namespace tdsmrp

#endif  // TDSMRP_CORE_HPP
