#pragma once

#include <string>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

struct VarScenario {
  double alpha = 0.05;
  double threshold = 0.0;
};

struct LabelSeries {
  std::vector<Date> dates;
  std::vector<std::uint8_t> labels;          // 1 = crash
  std::vector<std::uint8_t> return_missing;  // rows labeled 0 because the return was missing
  VarScenario scenario;
};

// Empirical alpha-quantile of the observed returns, linear interpolation
// between order statistics (h = (n-1)*alpha).
double var_threshold(const Series& returns, double alpha);

// Warns on stderr when the threshold comes out positive.
VarScenario make_scenario(const Series& returns, double alpha);

// label_t = 1 iff r_t < threshold (strict). Missing returns are labeled 0
// and flagged.
LabelSeries label_crashes(const std::vector<Date>& dates, const Series& returns, const VarScenario& scenario);

// `date,return,label,scenario_alpha,threshold` rows.
void save_labels_csv(const LabelSeries& labels, const Series& returns, const std::string& path);

}  // namespace crashwatch
