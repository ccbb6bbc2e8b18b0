// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace tdsmrp {

namespace {

std::string fixed(double x, int digits = 6) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string scientific(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string horizon_text(double days) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gd", days);
  return buf;
}

const char* kPalette[] = {"#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182",
                          "#8d6a9f", "#30343f", "#e07a5f", "#3d405b", "#81b29a"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

double ci_half_width(const GridCell& cell) {
  if (cell.per_seed.empty()) return 0.0;
  return 1.96 * cell.std / std::sqrt(static_cast<double>(cell.per_seed.size()));
}

void write_report_table(std::ostream& out, const EvalReport& report) {
  const bool with_p = !report.comparisons.empty();
  out << "dataset\tmodel\thorizon_days\tn_seeds\tmean_auroc\tsd\tci95_low\tci95_high";
  if (with_p) out << "\tp_raw\tp_by_adjusted";
  out << '\n';
  for (const auto& c : report.grid) {
    const double half = ci_half_width(c);
    out << c.dataset << '\t' << c.model << '\t' << c.horizon_days << '\t' << c.per_seed.size()
        << '\t' << fixed(c.mean) << '\t' << fixed(c.std) << '\t' << fixed(c.mean - half) << '\t'
        << fixed(c.mean + half);
    if (with_p) {
      const auto it = std::find_if(report.comparisons.begin(), report.comparisons.end(),
                                   [&](const Comparison& k) {
                                     return k.baseline == c.model && k.dataset == c.dataset &&
                                            k.horizon_days == c.horizon_days;
                                   });
      if (it == report.comparisons.end()) out << "\t-\t-";
      else out << '\t' << scientific(it->p_raw) << '\t' << scientific(it->p_adjusted);
    }
    out << '\n';
  }
}

void write_oracle_table(std::ostream& out, const EvalReport& report) {
  out << "dataset\tmodel\tseed\tmae\tmax_error\n";
  for (const auto& o : report.oracle)
    for (std::size_t i = 0; i < o.mae.size(); ++i)
      out << o.dataset << '\t' << o.model << '\t' << report.seeds[i] << '\t' << fixed(o.mae[i])
          << '\t' << fixed(o.max_error[i]) << '\n';
}

void write_report_svg(std::ostream& out, const EvalReport& report, const std::string& dataset) {
  const double width = 760, height = 420, left = 60, right = 170, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const double y_min = 0.5, y_max = 1.0;
  auto y_of = [&](double v) {
    return top + plot_h * (1.0 - (std::clamp(v, y_min, y_max) - y_min) / (y_max - y_min));
  };
  const std::size_t n_models = report.models.size();
  const double group_w = plot_w / static_cast<double>(kHorizonsDays.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, n_models));

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"22\" font-size=\"15\">AUROC by horizon: "
      << escape(dataset) << "</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = y_min + (y_max - y_min) * k / 5.0;
    out << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << y_of(v)
        << "\" y2=\"" << y_of(v) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">"
        << fixed(v, 1) << "</text>\n";
  }
  for (std::size_t h = 0; h < kHorizonsDays.size(); ++h) {
    const double gx = left + group_w * static_cast<double>(h) + group_w * 0.1;
    for (std::size_t m = 0; m < n_models; ++m) {
      const auto& c = report.cell(report.models[m], dataset, kHorizonsDays[h]);
      const double x = gx + bar_w * static_cast<double>(m);
      const double half = ci_half_width(c);
      out << "<rect x=\"" << x << "\" y=\"" << y_of(c.mean) << "\" width=\"" << bar_w * 0.9
          << "\" height=\"" << y_of(y_min) - y_of(c.mean) << "\" fill=\"" << kPalette[m % 10]
          << "\"/>\n";
      const double cx = x + bar_w * 0.45;
      out << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y_of(c.mean - half)
          << "\" y2=\"" << y_of(c.mean + half) << "\" stroke=\"black\"/>\n";
    }
    out << "<text x=\"" << left + group_w * (static_cast<double>(h) + 0.5) << "\" y=\""
        << top + plot_h + 18 << "\" text-anchor=\"middle\">" << horizon_text(kHorizonsDays[h])
        << "</text>\n";
  }
  out << "<line x1=\"" << left << "\" x2=\"" << left << "\" y1=\"" << top << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << top + plot_h
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t m = 0; m < n_models; ++m) {
    const double ly = top + 10 + 20.0 * static_cast<double>(m);
    out << "<rect x=\"" << left + plot_w + 20 << "\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[m % 10] << "\"/>\n";
    out << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << ly << "\">" << escape(report.models[m])
        << "</text>\n";
  }
  out << "<text x=\"" << left << "\" y=\"" << height - 14
      << "\" font-size=\"11\">Whiskers: mean ± 1.96 sd/√n over " << report.seeds.size()
      << " seeds (normal approximation)</text>\n";
  out << "</svg>\n";
}

void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows) {
  out << "delay_x_hours";
  for (double h : kHorizonsDays) out << "\tval_auroc_" << horizon_text(h);
  out << "\tselected\n";
  for (const auto& r : rows) {
    out << r.delay_x;
    for (double v : r.val_auroc) out << '\t' << fixed(v);
    out << '\t' << (r.selected ? "yes" : "no") << '\n';
  }
}

void write_sweep_svg(std::ostream& out, std::span<const SweepRow> rows) {
  const double width = 640, height = 400, left = 60, right = 120, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double lo = 1.0, hi = 0.0;
  for (const auto& r : rows)
    for (double v : r.val_auroc)
      if (!std::isnan(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (lo > hi) {
    lo = 0.5;
    hi = 1.0;
  }
  lo = std::floor(lo * 50.0) / 50.0;
  hi = std::max(lo + 0.02, std::ceil(hi * 50.0) / 50.0);
  const std::size_t n = rows.size();
  auto x_of = [&](std::size_t i) {
    return n <= 1 ? left + plot_w / 2 : left + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto y_of = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"22\" font-size=\"15\">Validation AUROC by state-to-state delay</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << y_of(v)
        << "\" y2=\"" << y_of(v) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">"
        << fixed(v, 3) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    out << "<text x=\"" << x_of(i) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
        << rows[i].delay_x << "h" << (rows[i].selected ? "*" : "") << "</text>\n";
  }
  for (std::size_t h = 0; h < kHorizonsDays.size(); ++h) {
    std::string points;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = rows[i].val_auroc[h];
      if (std::isnan(v)) continue;
      points += fixed(x_of(i), 2) + "," + fixed(y_of(v), 2) + " ";
      out << "<circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(v) << "\" r=\"3\" fill=\""
          << kPalette[h] << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[h] << "\" points=\"" << points << "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(h);
    out << "<rect x=\"" << left + plot_w + 20 << "\" y=\"" << ly - 10
        << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[h] << "\"/>\n";
    out << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << ly << "\">"
        << horizon_text(kHorizonsDays[h]) << "</text>\n";
  }
  out << "<text x=\"" << left << "\" y=\"" << height - 14
      << "\" font-size=\"11\">* selected by 28-day validation AUROC</text>\n";
  out << "</svg>\n";
}

}  // namespace tdsmrp
