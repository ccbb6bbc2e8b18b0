// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations shared by the unit tests and the
// acceptance runner. Nothing here calls the code path it is checking.

#ifndef TDSMRP_TESTS_SUPPORT_HPP
#define TDSMRP_TESTS_SUPPORT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdsmrp/model.hpp"
#include "tdsmrp/pipeline.hpp"
#include "tdsmrp/simulator.hpp"

namespace tdsmrp::testing {

/// Counts every (positive, negative) pair; ties count one half.
double brute_force_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Adjusted p_i = min over j >= rank(i) of min(1, m c(m) p_(j) / j), evaluated
/// literally in O(m^2).
std::vector<double> by_step_up_direct(std::span<const double> p);

/// Upper tail P(T > t) of Student's t with `df` degrees of freedom by
/// adaptive quadrature of the density.
double t_upper_tail_quadrature(double t, double df);

/// Mean weighted cross-entropy of the model over a batch, computed from
/// forward() alone.
double batch_loss(const ValueModel<double>& model, std::span<const ObservationWindow* const> batch,
                  std::span<const double> targets, std::span<const double> weights);

/// Central finite differences of batch_loss for the listed parameter indices.
/// When `kinks` is given, entry k is set to 1 if some ReLU pre-activation in
/// the batch changes sign between theta - step and theta + step, where the
/// loss is not differentiable and the central difference is meaningless.
std::vector<double> finite_difference(ValueModel<double> model,
                                      std::span<const ObservationWindow* const> batch,
                                      std::span<const double> targets, std::span<const double> weights,
                                      std::span<const Eigen::Index> indices, double step = 1e-5,
                                      std::vector<std::uint8_t>* kinks = nullptr);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-7);

/// Model config with at most ~5k parameters for gradient checks.
ModelConfig small_model_config(int feature_vocab);

/// Standardized windows from a freshly simulated default cohort.
struct WindowFixture {
  CohortConfig cohort;
  std::vector<Episode> episodes;
  StandardizationStats stats;
  std::vector<ObservationWindow> windows;
};
WindowFixture window_fixture(std::size_t episodes, std::uint64_t seed);

/// Next-state decision by scanning every event; nullopt is TERMINAL.
std::optional<std::size_t> brute_force_next(const Episode& episode, std::size_t anchor,
                                            const FeatureRegistry& registry, double delay_x,
                                            double window_len = 24.0);

/// Runs the command-line tool with `args`; returns its exit status.
int run_cli(const std::string& cli, const std::string& args);

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace tdsmrp::testing

#endif  // TDSMRP_TESTS_SUPPORT_HPP
