#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"
#include "crashwatch/labeling.hpp"
#include "crashwatch/market_data.hpp"

namespace crashwatch {

// Samples are [n][t][f], timesteps ordered oldest to newest; the label at
// sample date d is predicted from the t rows strictly before d.
struct WindowTensor {
  std::int64_t n = 0;
  std::int64_t t = 0;
  std::int64_t f = 0;
  std::vector<double> values;
  std::vector<Date> sample_dates;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> feature_names;

  double& at(std::int64_t i, std::int64_t step, std::int64_t feat) {
    return values[static_cast<std::size_t>((i * t + step) * f + feat)];
  }
  double at(std::int64_t i, std::int64_t step, std::int64_t feat) const {
    return values[static_cast<std::size_t>((i * t + step) * f + feat)];
  }
};

WindowTensor make_windows(const FeaturePanel& panel, const LabelSeries& labels, int timesteps);

// `<feature>@<lag>`, lag 1 = newest timestep.
std::vector<std::string> flat_feature_names(const WindowTensor& tensor);
Matrix flatten_windows(const WindowTensor& tensor);

struct Standardizer {
  std::vector<double> mean;             // per original feature
  std::vector<double> stddev;           // population std over train samples x timesteps
  std::vector<std::uint8_t> kept;       // zero-variance features are dropped
  std::vector<std::string> kept_names;  // names of surviving features
  std::int64_t n_kept = 0;
};

Standardizer fit_standardizer(const WindowTensor& tensor, const std::vector<std::int64_t>& train_idx);
WindowTensor apply_standardizer(const WindowTensor& tensor, const Standardizer& s);

WindowTensor subset_windows(const WindowTensor& tensor, const std::vector<std::int64_t>& idx);

// One-line JSON header, then the sample block as little-endian float64.
void save_tensor(const WindowTensor& tensor, const std::string& path);
WindowTensor load_tensor(const std::string& path);

}  // namespace crashwatch
