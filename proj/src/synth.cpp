#include "crashwatch/synth.hpp"

#include <algorithm>

namespace crashwatch {

SynthPanel make_planted_panel(const SynthConfig& cfg) {
  if (cfg.n_dates < 2 || cfg.n_features < 1) fail(Err::InvalidArgument, "planted panel needs dates and features");
  if (cfg.driver_feature < 0 || cfg.driver_feature >= cfg.n_features) {
    fail(Err::InvalidArgument, "driver feature index out of range");
  }
  if (!(cfg.crash_alpha > 0.0 && cfg.crash_alpha < 1.0)) fail(Err::AlphaOutOfRange, "crash_alpha must be in (0,1)");

  SynthPanel out;
  Date d = cfg.start;
  while (d.is_weekend()) d = d.next_weekday();
  for (std::int64_t i = 0; i < cfg.n_dates; ++i) {
    out.panel.dates.push_back(d);
    d = d.next_weekday();
  }

  Rng rng(cfg.seed);
  std::vector<Series> cols(static_cast<std::size_t>(cfg.n_features),
                           Series(static_cast<std::size_t>(cfg.n_dates)));
  // Row-major draw order so every feature of a date precedes the next date.
  for (std::int64_t t = 0; t < cfg.n_dates; ++t) {
    for (int f = 0; f < cfg.n_features; ++f) {
      cols[static_cast<std::size_t>(f)][static_cast<std::size_t>(t)] = rng.normal();
    }
  }
  for (int f = 0; f < cfg.n_features; ++f) {
    out.panel.add_column("f" + std::to_string(f), cols[static_cast<std::size_t>(f)]);
  }

  const Series& driver = cols[static_cast<std::size_t>(cfg.driver_feature)];
  // Quantile over the lagged values that generate labels (the last date's
  // driver never does), keeping the crash fraction within 1/N of alpha.
  const Series lagged(driver.begin(), driver.end() - 1);
  const double thr = var_threshold(lagged, cfg.crash_alpha);

  out.labels.dates = out.panel.dates;
  out.labels.scenario.alpha = cfg.crash_alpha;
  out.labels.scenario.threshold = thr;
  out.labels.labels.assign(static_cast<std::size_t>(cfg.n_dates), 0);
  out.labels.return_missing.assign(static_cast<std::size_t>(cfg.n_dates), 0);
  for (std::int64_t t = 1; t < cfg.n_dates; ++t) {
    if (driver[static_cast<std::size_t>(t - 1)] < thr) out.labels.labels[static_cast<std::size_t>(t)] = 1;
  }
  return out;
}

}  // namespace crashwatch
