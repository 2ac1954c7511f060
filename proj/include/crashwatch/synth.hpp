#pragma once

#include <cstdint>

#include "crashwatch/labeling.hpp"
#include "crashwatch/market_data.hpp"

namespace crashwatch {

// Panel with a planted crash signal: iid standard-normal features on a weekday
// calendar; the label fires exactly when yesterday's driver feature sits below
// its empirical alpha-quantile.
struct SynthConfig {
  std::int64_t n_dates = 2000;
  int n_features = 10;
  double crash_alpha = 0.05;
  std::uint64_t seed = 0;
  int driver_feature = 0;
  Date start = Date{.days = 14613};  // 2010-01-04
};

struct SynthPanel {
  FeaturePanel panel;
  LabelSeries labels;
};

SynthPanel make_planted_panel(const SynthConfig& cfg);

}  // namespace crashwatch
