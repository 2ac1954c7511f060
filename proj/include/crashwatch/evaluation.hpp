#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
};

Confusion confusion_at(const std::vector<std::uint8_t>& y, const std::vector<double>& p, double threshold);

// Undefined ratios come back empty rather than as NaN.
std::optional<double> inverse_false_alarm_rate(const Confusion& c);  // 1 - FP/(FP+TN)
std::optional<double> hit_rate(const Confusion& c);                  // TP/(TP+FN)
std::optional<double> balanced_accuracy(const Confusion& c);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Thresholds descend over the distinct scores; tied scores enter as one step.
std::vector<PrPoint> pr_curve(const std::vector<std::uint8_t>& y, const std::vector<double>& p);

// Average precision: sum of (R_k - R_{k-1}) * P_k along the curve.
double auc_prc(const std::vector<std::uint8_t>& y, const std::vector<double>& p);

struct MetricsReport {
  std::optional<double> ifar;
  std::optional<double> hit_rate;
  std::optional<double> bal_acc;
  std::optional<double> auc_prc;
  Confusion counts;
  double threshold = 0.5;
};

MetricsReport evaluate_predictions(const std::vector<std::uint8_t>& y, const std::vector<double>& p,
                                   double threshold);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& m);
std::string metrics_json(const MetricsReport& m);

}  // namespace crashwatch
