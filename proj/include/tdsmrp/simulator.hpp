// SPDX-License-Identifier: Apache-2.0
//
// Synthetic admissions from a continuous-time latent Markov chain with two
// absorbing states (death, discharge), plus the exact absorption oracle.

#ifndef TDSMRP_SIMULATOR_HPP
#define TDSMRP_SIMULATOR_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tdsmrp/core.hpp"

namespace tdsmrp {

/// State-conditional Poisson rate (events/hour) and Gaussian value model of
/// one feature. Each vector has one entry per transient latent state.
struct EmissionSpec {
  std::vector<double> rate;
  std::vector<double> mean;
  std::vector<double> std;

  friend bool operator==(const EmissionSpec&, const EmissionSpec&) = default;
};

struct DemographicsSpec {
  double age_mean = 65.0;
  double age_std = 15.0;
  double age_min = 18.0;
  double age_max = 100.0;
  double female_prob = 0.44;
  double weight_mean_female = 74.0;
  double weight_mean_male = 86.0;
  double weight_std = 15.0;
  double weight_missing_prob = 0.02;

  friend bool operator==(const DemographicsSpec&, const DemographicsSpec&) = default;
};

/// Latent states 0..n_latent-1 are transient; n_latent is death and
/// n_latent+1 is discharge.
struct CohortConfig {
  FeatureRegistry registry;
  int n_latent = 0;
  Eigen::MatrixXd rate_matrix;   // (n_latent+2)^2 generator
  Eigen::VectorXd initial_dist;  // over transient states
  std::vector<EmissionSpec> emissions;  // indexed by feature id; empty for demographics
  DemographicsSpec demographics;
  double max_duration = 24.0 * 365.0;

  int death_state() const { return n_latent; }
  int discharge_state() const { return n_latent + 1; }
  bool is_absorbing(int state) const { return state >= n_latent; }

  friend bool operator==(const CohortConfig& a, const CohortConfig& b) {
    return a.registry == b.registry && a.n_latent == b.n_latent &&
           a.rate_matrix == b.rate_matrix && a.initial_dist == b.initial_dist &&
           a.emissions == b.emissions && a.demographics == b.demographics &&
           a.max_duration == b.max_duration;
  }
};

/// Throws InvalidInput naming the first violated invariant.
void validate(const CohortConfig& config);

/// Perturbation emulating a cohort from another institution.
struct ShiftSpec {
  std::vector<double> emission_mean_shift;  // per feature id; empty means no shift
  double rate_scale = 1.0;
  std::optional<Eigen::VectorXd> initial_dist_override;
  double death_scale = 1.0;
  double discharge_scale = 1.0;

  bool is_identity() const;
};

/// Samples one episode from the stream (seed, index). Bit-identical for equal
/// arguments. Censoring at max_duration is recorded as discharge.
Episode sample_episode(const CohortConfig& config, std::uint64_t seed, std::uint64_t index = 0);

/// `n` episodes with patient ids 0..n-1, one independent stream each.
std::vector<Episode> sample_cohort(const CohortConfig& config, std::size_t n, std::uint64_t seed);

/// P(absorption in death | start in transient state i) for every i.
Eigen::VectorXd absorption_probability(const CohortConfig& config);

CohortConfig apply_shift(const CohortConfig& config, const ShiftSpec& shift);

// Fixtures.

/// One transient state with the given exit rates to death and discharge.
CohortConfig single_state_cohort(double death_rate, double discharge_rate);

/// Three-state severity ladder used for the Monte-Carlo oracle check.
CohortConfig ladder3_cohort();

/// Four-state ladder with 12 synthetic features (8 lab, 3 infusion, 1 bolus).
CohortConfig default_cohort();

/// Shift used as the external-validation analog of default_cohort().
ShiftSpec default_external_shift(const CohortConfig& config);

}  // namespace tdsmrp

#endif  // TDSMRP_SIMULATOR_HPP
