#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

struct ForestHyper {
  int n_estimators = 100;
  int max_depth = 10;
  int min_samples_leaf = 1;  // features_per_split is fixed at sqrt(F)
  std::uint64_t seed = 0;
};

struct BoostHyper {
  int n_estimators = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  double lambda = 1.0;  // leaf weight regularization
  std::uint64_t seed = 0;
};

struct TreeNode {
  std::int64_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int64_t left = -1;
  std::int64_t right = -1;
  double value = 0.0;  // class-1 frequency (forest) or raw leaf weight (boosting)

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict_row(const double* row) const;
  std::vector<double> predict(const Matrix& x) const;
};

// Greedy CART on Gini impurity decrease. `mtry` features are drawn without
// replacement from `rng` at every node; candidate thresholds are midpoints
// between consecutive distinct values; ties go to the lowest feature index,
// then the lowest threshold.
DecisionTree fit_tree_gini(const Matrix& x, const std::vector<std::uint8_t>& y,
                           const std::vector<std::int64_t>& rows, int max_depth, int min_samples_leaf, int mtry,
                           Rng& rng);

// Second-order leaf weights w* = -G/(H+lambda); splits need strictly positive
// gain 0.5*(GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)).
DecisionTree fit_tree_newton(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                             const std::vector<std::int64_t>& rows, int max_depth, double lambda);

struct ForestModel {
  ForestHyper hyper;
  std::vector<DecisionTree> trees;
};

ForestModel fit_forest(const Matrix& x, const std::vector<std::uint8_t>& y, const ForestHyper& hyper);
// Soft vote: mean leaf class-1 frequency across trees.
std::vector<double> predict_forest(const ForestModel& m, const Matrix& x);
// Hard vote: share of trees whose leaf frequency reaches 0.5.
std::vector<double> predict_forest_hard(const ForestModel& m, const Matrix& x);

struct BoostModel {
  BoostHyper hyper;
  double base_score = 0.0;  // log-odds of the training base rate
  std::vector<DecisionTree> trees;
};

BoostModel fit_boost(const Matrix& x, const std::vector<std::uint8_t>& y, const BoostHyper& hyper);
std::vector<double> predict_boost(const BoostModel& m, const Matrix& x);

void save_forest(const ForestModel& m, const std::string& path);
ForestModel load_forest(const std::string& path);
void save_boost(const BoostModel& m, const std::string& path);
BoostModel load_boost(const std::string& path);

}  // namespace crashwatch
