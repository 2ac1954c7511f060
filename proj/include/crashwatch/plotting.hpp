#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

struct ProbabilitySeries {
  std::vector<Date> dates;
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;  // actual crash markers
  double threshold = 0.5;
  std::string title;
};

// `date,probability,label` rows, full-precision probabilities.
void save_probability_csv(const ProbabilitySeries& s, const std::string& path);
ProbabilitySeries load_probability_csv(const std::string& path);

// Deterministic byte-stable rendering: line chart with crash markers and the
// decision-threshold rule.
std::string render_probability_svg(const ProbabilitySeries& s);
void save_probability_svg(const ProbabilitySeries& s, const std::string& path);

}  // namespace crashwatch
