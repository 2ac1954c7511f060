#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"
#include "crashwatch/ensembles.hpp"
#include "crashwatch/evaluation.hpp"
#include "crashwatch/indicators.hpp"
#include "crashwatch/labeling.hpp"
#include "crashwatch/market_data.hpp"
#include "crashwatch/resampling.hpp"
#include "crashwatch/seqnet.hpp"
#include "crashwatch/windowing.hpp"

namespace crashwatch {

enum class Family { Rnn, Lstm, Gru, Forest, Boost };

std::string family_name(Family f);
Family family_from_name(const std::string& name);
const std::vector<Family>& family_order();

struct DateRange {
  Date start;
  Date end;

  bool contains(Date d) const { return start <= d && d <= end; }
};

struct Fold {
  DateRange train;
  DateRange eval;
  bool is_test = false;
};

struct SplitPlan {
  std::vector<Fold> folds;
};

struct RnnGrid {
  std::vector<int> neurons{32, 64, 128};
  std::vector<int> layers{1, 2};
  std::vector<double> learning_rate{0.001, 0.01, 0.1};
  int max_epochs = 50;
  int patience = 10;
  double l1 = 1e-5;
  double l2 = 1e-4;
  int batch_size = 32;
  StateAct state_act = StateAct::Relu;
};

struct ForestGrid {
  std::vector<int> n_estimators{100, 200, 300};
  std::vector<int> max_depth{10, 20, 30};
  int min_samples_leaf = 1;
};

struct BoostGrid {
  std::vector<int> n_estimators{100, 200, 300};
  std::vector<double> learning_rate{0.01, 0.1, 0.2};
  std::vector<int> max_depth{3, 4, 5};
  double lambda = 1.0;
};

struct InstrumentSource {
  std::string id;
  std::string file;  // relative to paths.data unless absolute
};

struct MarketConfig {
  std::string id;
  std::string anchor;
  std::vector<InstrumentSource> instruments;
  std::optional<std::int64_t> expected_predictors;
};

struct ResamplingConfig {
  bool enabled = true;
  int smote_k = 5;
  int enn_k = 3;
  double ratio = 1.0;
};

struct PathsConfig {
  std::string data = ".";
  std::string out = "out";
};

struct ExperimentConfig {
  std::vector<MarketConfig> markets;
  std::vector<double> alphas{0.05, 0.025, 0.01};
  std::vector<Fold> plan_folds;  // empty = default walk-forward plan
  std::optional<RnnGrid> rnn;
  std::optional<RnnGrid> lstm;
  std::optional<RnnGrid> gru;
  std::optional<ForestGrid> forest;
  std::optional<BoostGrid> boost;
  ResamplingConfig resampling;
  int repetitions = 10;
  std::uint64_t seed = 0;
  PathsConfig paths;
  int timesteps = 7;
  std::string threshold_window = "full";  // or "train": labels thresholded on pre-test data only
  LagSet lags;
  std::vector<std::string> extra_raw_fields{"open", "high", "low"};  // anchor-only raw columns
  int knn_impute_k = 5;
  double max_missing_frac = 0.2;

  std::vector<Family> families() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Default plan: three expanding validation folds then the held-out test fold
// (train 2010-2019, test 2020-2023).
SplitPlan make_split_plan(const ExperimentConfig& cfg);
void check_plan(const SplitPlan& plan);  // train end < eval start, single final test fold

struct PreparedMarket {
  std::string id;
  FeaturePanel panel;
  Series returns;  // anchor returns aligned to panel rows; may contain missing
};

PreparedMarket prepare_market(const ExperimentConfig& cfg, const MarketConfig& market);

struct MarketWindows {
  LabelSeries labels;
  WindowTensor tensor;
};

MarketWindows make_market_windows(const ExperimentConfig& cfg, const PreparedMarket& market, double alpha);

struct GridPoint {
  Family family = Family::Forest;
  RnnHyper rnn;
  ForestHyper forest;
  BoostHyper boost;
  std::string label;  // human-readable point description
};

std::vector<GridPoint> enumerate_grid(const ExperimentConfig& cfg, Family family);

struct FittedModel {
  Family family = Family::Forest;
  std::optional<Standardizer> standardizer;  // recurrent models only
  std::optional<SeqNet> net;
  ForestModel forest;
  BoostModel boost;

  std::vector<double> predict(const WindowTensor& w) const;
  void save(const std::string& path) const;
};

FittedModel load_fitted(const std::string& path);

// Rebuilds a window tensor from flattened SMOTE-ENN output. Original rows keep
// their own dates; synthetic rows carry the latest original sample date.
WindowTensor rebuild_windows(const WindowTensor& source, const ResampleResult& rr);

struct PipelineRun {
  std::vector<double> probs;  // on the eval tensor
  MetricsReport metrics;
  bool diverged = false;
  std::vector<std::string> notes;
};

// One train/evaluate pass. Training data is standardized (recurrent families)
// and resampled per `rs`; eval rows are never resampled. `final_mode` carves a
// chronological 80/20 early-stopping split out of the training samples instead
// of monitoring the eval set.
PipelineRun train_and_evaluate(const GridPoint& point, const WindowTensor& train, const WindowTensor& eval,
                               const ResamplingConfig& rs, std::uint64_t seed, bool final_mode,
                               FittedModel* out_model = nullptr);

struct GridSearchResult {
  int best_index = -1;
  GridPoint best;
  std::vector<double> mean_scores;  // per grid point, mean validation AUC-PRC
  std::vector<std::string> notes;
};

GridSearchResult grid_search(const ExperimentConfig& cfg, const SplitPlan& plan, const WindowTensor& tensor,
                             Family family, const std::string& market, double alpha);

struct RawRow {
  std::string market;
  double alpha = 0.0;
  Family family = Family::Forest;
  int run = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
};

struct AggRow {
  double alpha = 0.0;
  Family family = Family::Forest;
  std::optional<double> ifar;
  std::optional<double> hit_rate;
  std::optional<double> bal_acc;
  std::optional<double> auc_prc;
  int runs = 0;
};

struct ResultsTable {
  std::vector<RawRow> raw;
  std::vector<AggRow> agg;
  std::vector<std::string> diagnostics;
};

std::vector<AggRow> aggregate_rows(const std::vector<RawRow>& raw, const std::vector<double>& alphas,
                                   const std::vector<Family>& families);

std::string results_raw_csv(const std::vector<RawRow>& raw);
std::string results_agg_csv(const std::vector<AggRow>& agg);

// Full study: prepare markets, grid-search per (market, alpha, family), run
// seeded repetitions on the test fold, and persist everything under paths.out.
ResultsTable run_experiment(const ExperimentConfig& cfg);

}  // namespace crashwatch
