#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashwatch/cli.hpp"
#include "crashwatch/experiment.hpp"

using namespace crashwatch;

// These cases shell into cli_main in-process. CMake runs the test binary from
// the repository root so configs/fixture.json and data/fixture resolve.
namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("crashwatch");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string fresh_dir(const std::string& leaf) {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/crashwatch_cli/" + leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

WindowTensor synth_tensor(std::int64_t n, std::int64_t t, std::int64_t f, std::uint64_t seed, int pos_every) {
  WindowTensor w;
  w.n = n;
  w.t = t;
  w.f = f;
  Rng rng(seed);
  w.values.resize(static_cast<std::size_t>(n * t * f));
  for (std::int64_t i = 0; i < n; ++i) {
    const bool pos = i % pos_every == 0;
    w.labels.push_back(pos ? 1 : 0);
    w.sample_dates.push_back(Date{18000 + static_cast<std::int32_t>(i)});
    for (std::int64_t j = 0; j < t * f; ++j) {
      w.values[static_cast<std::size_t>(i * t * f + j)] = rng.normal() + (pos ? 1.2 : 0.0);
    }
  }
  for (std::int64_t j = 0; j < f; ++j) w.feature_names.push_back("f" + std::to_string(j));
  return w;
}

std::string forest_only_config(const std::string& out_dir) {
  return std::string(R"({
    "markets": [{"id": "idx", "instruments": [
      {"id": "idx", "file": "idx.csv"},
      {"id": "glob1", "file": "glob1.csv"},
      {"id": "glob2", "file": "glob2.csv"}
    ]}],
    "alphas": [0.05],
    "plan": {"folds": [
      {"train": ["2010-01-04", "2011-03-31"], "eval": ["2011-04-01", "2011-12-31"]},
      {"train": ["2010-01-04", "2011-12-31"], "eval": ["2012-01-01", "2012-10-05"], "role": "test"}
    ]},
    "models": {"forest": {"n_estimators": [10], "max_depth": [4, 6]}},
    "repetitions": 1,
    "seed": 3,
    "timesteps": 7,
    "catalog": {"lags": [5, 10]},
    "paths": {"data": "data/fixture", "out": ")") +
         out_dir + R"("}
  })";
}

}  // namespace

TEST_CASE("usage errors are reported without running anything") {
  CHECK(run_cli({}) != 0);                              // a subcommand is required
  CHECK(run_cli({"transmogrify"}) != 0);                // unknown subcommand
  CHECK(run_cli({"label", "--in", "x", "--out", "y"}) != 0);  // missing required --alpha
  CHECK(run_cli({"label", "--alpha", "0.05", "--in", "x", "--out", "y", "--frobnicate"}) != 0);
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("pipeline errors exit with status 1") {
  CHECK(run_cli({"label", "--alpha", "0.05", "--in", "/tmp/crashwatch_cli_missing.csv", "--out",
                 "/tmp/crashwatch_cli/never.csv"}) == 1);
  CHECK(run_cli({"evaluate", "--model", "/tmp/crashwatch_cli_missing.ckpt", "--in", "whatever", "--out",
                 "/tmp/crashwatch_cli/never2.csv"}) == 1);
  const std::string dir = fresh_dir("badrun");
  CHECK(run_cli({"run", "--config", "configs/fixture.json", "--out", dir, "--threshold-window", "weird"}) == 1);
}

TEST_CASE("label writes the documented CSV with the empirical quantile") {
  const std::string dir = fresh_dir("label");
  const std::string out = dir + "/labels.csv";
  REQUIRE(run_cli({"label", "--alpha", "0.1", "--in", "data/fixture/idx.csv", "--out", out}) == 0);

  const PriceSeries ps = load_ohlcv_csv("data/fixture/idx.csv", "idx");
  Series adj;
  for (const OhlcvBar& b : ps.bars) adj.push_back(b.adj_close);
  const Series returns = simple_return(adj);
  const double threshold = var_threshold(returns, 0.1);

  const auto rows = lines_of(read_file(out));
  REQUIRE(rows.size() == ps.bars.size() + 1);
  CHECK(rows[0] == "date,return,label,scenario_alpha,threshold");
  std::int64_t crashes = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split_csv(rows[i]);
    REQUIRE(f.size() == 5);
    CHECK(f[0] == ps.bars[i - 1].date.iso());
    CHECK(f[3] == "0.1");
    CHECK(f[4] == fmt_full(threshold));
    crashes += f[2] == "1";
  }
  std::int64_t want = 0;
  for (const double r : returns) want += !is_missing(r) && r < threshold;
  CHECK(crashes == want);
}

TEST_CASE("ingest aligns raw panels onto the anchor calendar") {
  const std::string dir = fresh_dir("ingest");
  REQUIRE(run_cli({"ingest", "--config", "configs/fixture.json", "--out", dir}) == 0);
  const auto rows = lines_of(read_file(dir + "/panel_raw_idx.csv"));
  const PriceSeries anchor = load_ohlcv_csv("data/fixture/idx.csv", "idx");
  CHECK(rows.size() == anchor.bars.size() + 1);
  CHECK(rows[0].find("idx.adj_close") != std::string::npos);
  CHECK(rows[0].find("glob1.close") != std::string::npos);
  CHECK(split_csv(rows[0]).size() == 19);  // date + 3 instruments x 6 fields
}

TEST_CASE("features matches the library panel byte for byte") {
  const std::string dir = fresh_dir("features");
  REQUIRE(run_cli({"features", "--config", "configs/fixture.json", "--out", dir}) == 0);

  const ExperimentConfig cfg = load_config("configs/fixture.json");
  const PreparedMarket pm = prepare_market(cfg, cfg.markets[0]);
  save_panel_csv(pm.panel, dir + "/expected.csv");
  CHECK(read_file(dir + "/features_idx.csv") == read_file(dir + "/expected.csv"));
  CHECK(pm.panel.n_cols() == 36);
}

TEST_CASE("windows writes the same tensor the library builds") {
  const std::string dir = fresh_dir("windows");
  REQUIRE(run_cli({"windows", "--config", "configs/fixture.json", "--out", dir}) == 0);

  const ExperimentConfig cfg = load_config("configs/fixture.json");
  const PreparedMarket pm = prepare_market(cfg, cfg.markets[0]);
  const MarketWindows mw = make_market_windows(cfg, pm, 0.05);
  save_tensor(mw.tensor, dir + "/expected.bin");
  CHECK(read_file(dir + "/windows_idx_0.05.bin") == read_file(dir + "/expected.bin"));
}

TEST_CASE("resample reproduces the library result and honors seed precedence") {
  const std::string dir = fresh_dir("resample");
  const WindowTensor w = synth_tensor(40, 3, 4, 77, 5);
  save_tensor(w, dir + "/in.bin");

  REQUIRE(run_cli({"resample", "--in", dir + "/in.bin", "--out", dir + "/out.bin", "--seed", "9"}) == 0);

  ResampleConfig rc;
  rc.seed = 9;
  const ResampleResult rr = smote_enn(flatten_windows(w), w.labels, rc);
  save_tensor(rebuild_windows(w, rr), dir + "/expected.bin");
  CHECK(read_file(dir + "/out.bin") == read_file(dir + "/expected.bin"));

  const auto audit = lines_of(read_file(dir + "/out.bin.audit.csv"));
  REQUIRE_FALSE(audit.empty());
  CHECK(audit[0] == "row,provenance,origin,label");
  CHECK(audit.size() == rr.provenance.size() + 1);

  // CRASHWATCH_SEED matches an explicit --seed, and the flag wins over it.
  setenv("CRASHWATCH_SEED", "9", 1);
  REQUIRE(run_cli({"resample", "--in", dir + "/in.bin", "--out", dir + "/env.bin"}) == 0);
  CHECK(read_file(dir + "/env.bin") == read_file(dir + "/out.bin"));
  REQUIRE(run_cli({"resample", "--in", dir + "/in.bin", "--out", dir + "/flag.bin", "--seed", "123"}) == 0);
  CHECK(read_file(dir + "/flag.bin") != read_file(dir + "/out.bin"));
  setenv("CRASHWATCH_SEED", "not-a-number", 1);
  CHECK(run_cli({"resample", "--in", dir + "/in.bin", "--out", dir + "/bad.bin"}) == 1);
  unsetenv("CRASHWATCH_SEED");
}

TEST_CASE("train and evaluate round-trip a checkpoint") {
  const std::string dir = fresh_dir("train");
  const WindowTensor w = synth_tensor(80, 3, 4, 13, 4);
  save_tensor(w, dir + "/in.bin");
  write_file(dir + "/cfg.json", R"({
    "markets": [{"id": "m", "instruments": [{"id": "m", "file": "m.csv"}]}],
    "models": {"forest": {"n_estimators": [10], "max_depth": [4]}}
  })");

  REQUIRE(run_cli({"train", "--config", dir + "/cfg.json", "--model", "forest", "--in", dir + "/in.bin", "--out",
                   dir + "/model.ckpt", "--seed", "5"}) == 0);

  // The checkpoint must equal a library fit on the chronological 80/20 carve.
  const ExperimentConfig cfg = load_config(dir + "/cfg.json");
  const GridPoint point = enumerate_grid(cfg, Family::Forest).front();
  std::vector<std::int64_t> fit_idx, hold_idx;
  for (std::int64_t i = 0; i < w.n; ++i) (i < 64 ? fit_idx : hold_idx).push_back(i);
  FittedModel expect;
  train_and_evaluate(point, subset_windows(w, fit_idx), subset_windows(w, hold_idx), cfg.resampling, 5, false,
                     &expect);
  const FittedModel got = load_fitted(dir + "/model.ckpt");
  CHECK(got.predict(w) == expect.predict(w));

  REQUIRE(run_cli({"evaluate", "--model", dir + "/model.ckpt", "--in", dir + "/in.bin", "--out",
                   dir + "/metrics.csv"}) == 0);
  const MetricsReport m = evaluate_predictions(w.labels, got.predict(w), 0.5);
  CHECK(read_file(dir + "/metrics.csv") == metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n");
}

TEST_CASE("gridsearch writes a winners report over the validation folds") {
  const std::string dir = fresh_dir("gridsearch");
  write_file(dir + "/cfg.json", forest_only_config(dir));
  REQUIRE(run_cli({"gridsearch", "--config", dir + "/cfg.json", "--out", dir + "/winners.json"}) == 0);

  const nlohmann::json j = nlohmann::json::parse(read_file(dir + "/winners.json"));
  CHECK(j.at("format") == "gridsearch-winners");
  const auto& cell = j.at("markets").at("idx").at("0.05").at("forest");
  CHECK(cell.at("mean_scores").size() == 2);  // depth 4 and depth 6
  const int best = cell.at("best_index").get<int>();
  CHECK(best >= 0);
  CHECK(best < 2);
  CHECK(cell.at("label").get<std::string>().find("trees=10") == 0);
}

TEST_CASE("plot renders a probability series for a checkpoint") {
  const std::string dir = fresh_dir("plot");
  const ExperimentConfig cfg = load_config("configs/fixture.json");
  const PreparedMarket pm = prepare_market(cfg, cfg.markets[0]);
  const MarketWindows mw = make_market_windows(cfg, pm, 0.05);

  GridPoint point;
  point.family = Family::Forest;
  point.forest.n_estimators = 8;
  point.forest.max_depth = 4;
  std::vector<std::int64_t> fit_idx, hold_idx;
  for (std::int64_t i = 0; i < mw.tensor.n; ++i) (i < mw.tensor.n - 20 ? fit_idx : hold_idx).push_back(i);
  FittedModel fitted;
  train_and_evaluate(point, subset_windows(mw.tensor, fit_idx), subset_windows(mw.tensor, hold_idx),
                     ResamplingConfig{false, 5, 3, 1.0}, 2, false, &fitted);
  fitted.save(dir + "/model.ckpt");

  REQUIRE(run_cli({"plot", "--config", "configs/fixture.json", "--model", dir + "/model.ckpt", "--market", "idx",
                   "--alpha", "0.05", "--out", dir}) == 0);

  const auto rows = lines_of(read_file(dir + "/probability_idx_0.05.csv"));
  CHECK(rows.size() == static_cast<std::size_t>(mw.tensor.n) + 1);
  const std::string svg = read_file(dir + "/probability_idx_0.05.svg");
  CHECK(svg.find("<svg") != std::string::npos);

  CHECK(run_cli({"plot", "--config", "configs/fixture.json", "--model", dir + "/model.ckpt", "--market", "nope",
                 "--alpha", "0.05", "--out", dir}) == 1);
}

TEST_CASE("the full study reproduces itself across job counts") {
  const std::string out1 = fresh_dir("run1");
  const std::string out2 = fresh_dir("run2");
  REQUIRE(run_cli({"run", "--config", "configs/fixture.json", "--out", out1, "--jobs", "2"}) == 0);
  REQUIRE(run_cli({"run", "--config", "configs/fixture.json", "--out", out2, "--jobs", "1"}) == 0);

  const auto raw = lines_of(read_file(out1 + "/results_raw.csv"));
  CHECK(raw.size() == 1 + 5 * 2);  // header + five families x two repetitions
  const auto agg = lines_of(read_file(out1 + "/results_agg.csv"));
  CHECK(agg.size() == 1 + 5);
  CHECK(std::filesystem::exists(out1 + "/diagnostics.txt"));
  for (const char* fam : {"rnn", "lstm", "gru", "forest", "boost"}) {
    CHECK(std::filesystem::exists(out1 + "/checkpoints/idx_0.05_" + std::string(fam) + ".ckpt"));
  }
  CHECK(std::filesystem::exists(out1 + "/probability_idx_0.05.csv"));
  CHECK(std::filesystem::exists(out1 + "/probability_idx_0.05.svg"));

  CHECK(read_file(out1 + "/results_raw.csv") == read_file(out2 + "/results_raw.csv"));
  CHECK(read_file(out1 + "/results_agg.csv") == read_file(out2 + "/results_agg.csv"));
  CHECK(read_file(out1 + "/probability_idx_0.05.csv") == read_file(out2 + "/probability_idx_0.05.csv"));
}
