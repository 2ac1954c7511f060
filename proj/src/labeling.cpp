#include "crashwatch/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace crashwatch {

double var_threshold(const Series& returns, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(Err::AlphaOutOfRange, "alpha must lie strictly inside (0, 1), got " + fmt_full(alpha));
  }
  Series v;
  v.reserve(returns.size());
  for (double r : returns) {
    if (!is_missing(r)) v.push_back(r);
  }
  const auto n = static_cast<std::int64_t>(v.size());
  // n*alpha >= 1 guarantees at least one observation sits in the tail.
  if (static_cast<double>(n) * alpha < 1.0 - 1e-12) {
    fail(Err::InsufficientData,
         "need n*alpha >= 1 to estimate the " + fmt_full(alpha) + " quantile, have n=" + std::to_string(n));
  }
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(n - 1) * alpha;
  const auto lo = static_cast<std::int64_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= n) return v.back();
  return v[static_cast<std::size_t>(lo)] +
         frac * (v[static_cast<std::size_t>(lo + 1)] - v[static_cast<std::size_t>(lo)]);
}

VarScenario make_scenario(const Series& returns, double alpha) {
  VarScenario s;
  s.alpha = alpha;
  s.threshold = var_threshold(returns, alpha);
  if (s.threshold > 0.0) {
    std::fprintf(stderr, "warning: VaR threshold at alpha=%g is positive (%g); crash labels will fire on gains\n",
                 alpha, s.threshold);
  }
  return s;
}

LabelSeries label_crashes(const std::vector<Date>& dates, const Series& returns, const VarScenario& scenario) {
  if (dates.size() != returns.size()) {
    fail(Err::LengthMismatch, "dates and returns differ in length: " + std::to_string(dates.size()) + " vs " +
                                  std::to_string(returns.size()));
  }
  LabelSeries out;
  out.dates = dates;
  out.scenario = scenario;
  out.labels.resize(returns.size(), 0);
  out.return_missing.resize(returns.size(), 0);
  for (std::size_t i = 0; i < returns.size(); ++i) {
    if (is_missing(returns[i])) {
      out.return_missing[i] = 1;
    } else if (returns[i] < scenario.threshold) {
      out.labels[i] = 1;
    }
  }
  return out;
}

void save_labels_csv(const LabelSeries& labels, const Series& returns, const std::string& path) {
  if (labels.dates.size() != returns.size()) {
    fail(Err::LengthMismatch, "labels and returns differ in length");
  }
  std::ostringstream os;
  os << "date,return,label,scenario_alpha,threshold\n";
  for (std::size_t i = 0; i < labels.dates.size(); ++i) {
    os << labels.dates[i].iso() << ',';
    if (!is_missing(returns[i])) os << fmt_full(returns[i]);
    os << ',' << static_cast<int>(labels.labels[i]) << ',' << fmt_full(labels.scenario.alpha) << ','
       << fmt_full(labels.scenario.threshold) << '\n';
  }
  write_file(path, os.str());
}

}  // namespace crashwatch
