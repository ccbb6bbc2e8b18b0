// SPDX-License-Identifier: Apache-2.0
//
// Tab-separated tables and SVG charts for evaluation reports and delay sweeps.

#ifndef TDSMRP_REPORT_HPP
#define TDSMRP_REPORT_HPP

#include <iosfwd>
#include <span>
#include <string>

#include "tdsmrp/eval.hpp"
#include "tdsmrp/training.hpp"

namespace tdsmrp {

/// Half-width of the normal-approximation 95% interval, 1.96 * sd / sqrt(n).
double ci_half_width(const GridCell& cell);

/// One row per grid cell. The p-value columns hold the TD-vs-row comparison
/// and appear only when the report has comparisons.
void write_report_table(std::ostream& out, const EvalReport& report);

/// One row per (dataset, model, seed) with oracle MAE and max error.
void write_oracle_table(std::ostream& out, const EvalReport& report);

/// Grouped bars per horizon, one bar per model, with 95% interval whiskers.
void write_report_svg(std::ostream& out, const EvalReport& report, const std::string& dataset);

void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows);

/// Validation AUROC against delay, one line per horizon.
void write_sweep_svg(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace tdsmrp

#endif  // TDSMRP_REPORT_HPP
