// SPDX-License-Identifier: Apache-2.0
//
// Episodes to model inputs: anchor enumeration, 7-day window assembly with
// overflow prioritization, delayed next-state selection, standardization
// fitting, patient-level splits and class weights.

#ifndef TDSMRP_PIPELINE_HPP
#define TDSMRP_PIPELINE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tdsmrp/core.hpp"

namespace tdsmrp {

inline constexpr std::size_t kMaxWindowLength = 400;
inline constexpr std::array<double, 5> kHorizonsDays{1.0, 3.0, 7.0, 14.0, 28.0};
inline constexpr std::array<double, 6> kDelaySweepHours{4.0, 16.0, 24.0, 48.0, 72.0, 120.0};

/// Index of `days` in kHorizonsDays; throws InvalidInput if absent.
std::size_t horizon_index(double days);

/// all: every eligible event. uniform(n): n events per episode. thinned(f):
/// each event kept independently with probability f, so the kept anchors
/// are not tied to episode length.
struct AnchorSampling {
  enum class Mode { all, uniform, thinned };
  Mode mode = Mode::uniform;
  std::size_t n = 32;
  std::uint64_t seed = 0;
  double fraction = 1.0;

  static AnchorSampling all() { return {Mode::all, 0, 0, 1.0}; }
  static AnchorSampling uniform(std::size_t n, std::uint64_t seed) {
    return {Mode::uniform, n, seed, 1.0};
  }
  static AnchorSampling thinned(double fraction, std::uint64_t seed) {
    return {Mode::thinned, 0, seed, fraction};
  }

  friend bool operator==(const AnchorSampling&, const AnchorSampling&) = default;
};

/// Parses "all", "uniform:N" or "thinned:F" (0 < F <= 1) with the given seed.
AnchorSampling parse_anchor_sampling(const std::string& text, std::uint64_t seed);
std::string to_string(const AnchorSampling& sampling);

/// Indices into episode.events of the selected state markers, ascending.
/// Every non-demographic event is eligible.
std::vector<std::size_t> enumerate_anchors(const Episode& episode, const FeatureRegistry& registry,
                                           const AnchorSampling& sampling);

struct ObservationWindow {
  double anchor_time = 0.0;
  std::vector<MeasurementTuple> tuples;
  FeatureId anchor_feature;
  std::int64_t patient_id = 0;
  std::optional<int> true_latent;

  std::size_t size() const { return tuples.size(); }
};

/// Builds the standardized observation for the anchor at `anchor_index`.
/// Candidates are the anchor, every event in [anchor-168h, anchor] and the
/// demographics (weight imputed when missing). Raw values are clipped to the
/// outlier bounds. Above `max_length` candidates the window keeps, in order:
/// the anchor and demographics, the latest value of every infusion-rate
/// feature, then the rest by novelty and recency. Output is time ordered.
ObservationWindow assemble_window(const Episode& episode, std::size_t anchor_index,
                                  const FeatureRegistry& registry,
                                  const StandardizationStats& stats,
                                  std::size_t max_length = kMaxWindowLength);

struct NextStateRule {
  double delay_x = 24.0;
  double window_len = 24.0;
};

/// Throws InvalidInput unless delay_x is in the sweep set and window_len is 24.
void validate(const NextStateRule& rule);

/// Earliest non-demographic event in [anchor+x, anchor+x+window_len], lowest
/// feature id on ties; nullopt means the anchor is terminal.
std::optional<std::size_t> select_next_state(const Episode& episode, std::size_t anchor_index,
                                             const FeatureRegistry& registry,
                                             const NextStateRule& rule);

struct QuantileConfig {
  double lab_low = 0.001;
  double lab_high = 0.999;
  double drug_low = 0.005;
  double drug_high = 0.995;
  double std_floor = 1e-6;
  // Anchors used to estimate the pooled time-offset moments.
  AnchorSampling time_anchors = AnchorSampling::uniform(8, 0x7157);
  double female_weight = 74.0;
  double male_weight = 86.0;
};

struct FitReport {
  std::vector<FeatureId> floored;  // features whose v std hit the floor
  std::vector<FeatureId> unobserved;
};

struct FitResult {
  StandardizationStats stats;
  FitReport report;
};

/// Value at order statistic ceil(q*n) of `sorted` (1-based, clamped).
double order_quantile(std::span<const double> sorted, double q);

FitResult fit_standardization(std::span<const Episode> episodes,
                              std::span<const std::size_t> train_indices,
                              const FeatureRegistry& registry, const QuantileConfig& config = {});

enum class Fold { train, validation, test };

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Patient-level split; all episodes of a patient land in one fold.
Split split_patients(std::span<const Episode> episodes, std::array<double, 3> fractions,
                     std::uint64_t seed);

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;

  double at(double target) const { return target * positive + (1.0 - target) * negative; }
};

/// Normalized inverse class frequency; throws InvalidInput for one class.
ClassWeights class_weights(std::span<const std::uint8_t> labels);

struct TransitionSample {
  ObservationWindow current;
  std::optional<ObservationWindow> next;  // nullopt is TERMINAL
  double reward = 0.0;                    // terminal reward, defined when TERMINAL
  double interval_k = 0.0;                // hours between anchors, when not TERMINAL

  bool terminal() const { return !next.has_value(); }
};

/// One training/evaluation unit: a transition plus its outcome labels.
struct Sample {
  TransitionSample transition;
  std::size_t episode_index = 0;
  bool died = false;
  std::array<std::uint8_t, kHorizonsDays.size()> mortality{};  // per kHorizonsDays

  const ObservationWindow& window() const { return transition.current; }
};

/// Samples for the listed episodes, in episode then anchor order. With a
/// rule, next-state windows are assembled for TD training.
std::vector<Sample> build_samples(std::span<const Episode> episodes,
                                  std::span<const std::size_t> indices,
                                  const FeatureRegistry& registry,
                                  const StandardizationStats& stats,
                                  const AnchorSampling& sampling,
                                  const std::optional<NextStateRule>& rule);

}  // namespace tdsmrp

#endif  // TDSMRP_PIPELINE_HPP
