#include "crashwatch/cli.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crashwatch/experiment.hpp"
#include "crashwatch/parallel.hpp"
#include "crashwatch/plotting.hpp"

namespace crashwatch {
namespace {

struct Opts {
  std::string config;
  std::string in;
  std::string out;
  std::string model;
  std::string market;
  std::string threshold_window;
  double alpha = 0.05;
  int jobs = 0;
  bool baseline = false;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

struct CmdResult {
  std::vector<std::string> outputs;
  std::string human;
};

std::string out_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir + "/" + name;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("CRASHWATCH_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != std::strlen(s)) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    fail(Err::InvalidArgument, "CRASHWATCH_SEED must be an unsigned integer");
  }
}

// Precedence: --seed flag, then CRASHWATCH_SEED, then the config value.
std::uint64_t pick_seed(const Opts& o, std::uint64_t config_seed) {
  if (o.has_seed) return o.seed;
  if (const auto e = env_seed()) return *e;
  return config_seed;
}

void apply_jobs(const Opts& o) {
  if (o.jobs > 0) par::set_max_jobs(o.jobs);
}

FeaturePanel aligned_panel(const ExperimentConfig& cfg, const MarketConfig& mc) {
  std::vector<PriceSeries> series;
  series.reserve(mc.instruments.size());
  for (const auto& inst : mc.instruments) {
    const std::string path =
        (!inst.file.empty() && inst.file.front() == '/') ? inst.file : out_path(cfg.paths.data, inst.file);
    series.push_back(load_ohlcv_csv(path, inst.id));
  }
  return align_calendars(series, mc.anchor);
}

CmdResult do_ingest(const Opts& o) {
  apply_jobs(o);
  const ExperimentConfig cfg = load_config(o.config);
  CmdResult res;
  for (const MarketConfig& mc : cfg.markets) {
    const FeaturePanel panel = aligned_panel(cfg, mc);
    const std::string path = out_path(o.out, "panel_raw_" + mc.id + ".csv");
    save_panel_csv(panel, path);
    res.outputs.push_back(path);
  }
  res.human = "aligned " + std::to_string(res.outputs.size()) + " market panel(s) into " + o.out;
  return res;
}

CmdResult do_features(const Opts& o) {
  apply_jobs(o);
  const ExperimentConfig cfg = load_config(o.config);
  CmdResult res;
  for (const MarketConfig& mc : cfg.markets) {
    const PreparedMarket pm = prepare_market(cfg, mc);
    const std::string path = out_path(o.out, "features_" + mc.id + ".csv");
    save_panel_csv(pm.panel, path);
    res.outputs.push_back(path);
    res.human += (res.human.empty() ? "" : "; ") + mc.id + ": " + std::to_string(pm.panel.n_rows()) + " rows x " +
                 std::to_string(pm.panel.n_cols()) + " predictors";
  }
  return res;
}

struct DatedReturns {
  std::vector<Date> dates;
  Series returns;
};

// Accepts either a raw OHLCV export (returns are computed from adjusted close)
// or a two-column `date,return` file.
DatedReturns load_returns_any(const std::string& path) {
  const std::string text = read_file(path);
  std::string header = text.substr(0, text.find('\n'));
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  if (!header.empty() && header.back() == '\r') header.pop_back();

  DatedReturns out;
  if (header == "Date,Open,High,Low,Close,Adj Close,Volume") {
    const PriceSeries ps = parse_csv(text, "asset");
    Series adj;
    adj.reserve(ps.bars.size());
    for (const OhlcvBar& b : ps.bars) {
      out.dates.push_back(b.date);
      adj.push_back(b.adj_close);
    }
    out.returns = simple_return(adj);
    return out;
  }
  if (header != "date,return") {
    fail(Err::MalformedHeader, path + ": expected an OHLCV header or `date,return`");
  }
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  std::int64_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      fail(Err::MalformedRow, path + ":" + std::to_string(lineno) + ": expected exactly two fields");
    }
    out.dates.push_back(Date::from_iso(line.substr(0, comma)));
    const std::string val = line.substr(comma + 1);
    if (val.empty() || val == "null") {
      out.returns.push_back(kMissing);
    } else {
      try {
        std::size_t pos = 0;
        const double v = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trailing characters");
        out.returns.push_back(v);
      } catch (const std::exception&) {
        fail(Err::MalformedRow, path + ":" + std::to_string(lineno) + ": bad return value '" + val + "'");
      }
    }
  }
  if (out.dates.empty()) fail(Err::EmptyFile, path + " has no data rows");
  return out;
}

CmdResult do_label(const Opts& o) {
  const DatedReturns dr = load_returns_any(o.in);
  const VarScenario sc = make_scenario(dr.returns, o.alpha);
  const LabelSeries ls = label_crashes(dr.dates, dr.returns, sc);
  save_labels_csv(ls, dr.returns, o.out);

  std::int64_t crashes = 0;
  for (const auto v : ls.labels) crashes += v;
  CmdResult res;
  res.outputs.push_back(o.out);
  res.human = "threshold=" + fmt_full(sc.threshold) + " alpha=" + fmt_full(o.alpha) + " crashes=" +
              std::to_string(crashes) + "/" + std::to_string(ls.labels.size());
  return res;
}

CmdResult do_windows(const Opts& o) {
  apply_jobs(o);
  const ExperimentConfig cfg = load_config(o.config);
  CmdResult res;
  for (const MarketConfig& mc : cfg.markets) {
    const PreparedMarket pm = prepare_market(cfg, mc);
    for (const double alpha : cfg.alphas) {
      const MarketWindows mw = make_market_windows(cfg, pm, alpha);
      const std::string path = out_path(o.out, "windows_" + mc.id + "_" + fmt_full(alpha) + ".bin");
      save_tensor(mw.tensor, path);
      res.outputs.push_back(path);
    }
  }
  res.human = "wrote " + std::to_string(res.outputs.size()) + " window tensor(s) into " + o.out;
  return res;
}

CmdResult do_resample(const Opts& o) {
  apply_jobs(o);
  ResampleConfig rc;
  std::uint64_t config_seed = 0;
  if (!o.config.empty()) {
    const ExperimentConfig cfg = load_config(o.config);
    rc.smote_k = cfg.resampling.smote_k;
    rc.enn_k = cfg.resampling.enn_k;
    rc.target_minority_ratio = cfg.resampling.ratio;
    config_seed = cfg.seed;
  }
  rc.seed = pick_seed(o, config_seed);

  const WindowTensor w = load_tensor(o.in);
  const ResampleResult rr = smote_enn(flatten_windows(w), w.labels, rc);
  const WindowTensor out = rebuild_windows(w, rr);
  save_tensor(out, o.out);
  const std::string audit = o.out + ".audit.csv";
  save_resample_audit_csv(rr, audit);

  std::int64_t synthetic = 0, removed = 0;
  for (std::size_t i = 0; i < rr.provenance.size(); ++i) {
    synthetic += rr.provenance[i] == Provenance::Synthetic;
    removed += rr.removed_by_enn[i] ? 1 : 0;
  }
  CmdResult res;
  res.outputs = {o.out, audit};
  res.human = "resampled " + std::to_string(w.n) + " -> " + std::to_string(out.n) + " samples (" +
              std::to_string(synthetic) + " synthetic, " + std::to_string(removed) + " removed by ENN)";
  return res;
}

CmdResult do_train(const Opts& o) {
  apply_jobs(o);
  const ExperimentConfig cfg = load_config(o.config);
  const Family fam = family_from_name(o.model);
  const auto points = enumerate_grid(cfg, fam);
  const GridPoint& point = points.front();

  const WindowTensor w = load_tensor(o.in);
  if (w.n < 2) fail(Err::EmptySplit, "need at least 2 samples to carve out a holdout");
  std::int64_t n_fit = w.n * 8 / 10;
  n_fit = std::clamp<std::int64_t>(n_fit, 1, w.n - 1);
  std::vector<std::int64_t> fit_idx, hold_idx;
  for (std::int64_t i = 0; i < w.n; ++i) (i < n_fit ? fit_idx : hold_idx).push_back(i);

  ResamplingConfig rs = cfg.resampling;
  if (o.baseline) rs.enabled = false;
  const std::uint64_t seed = pick_seed(o, cfg.seed);

  FittedModel fitted;
  const PipelineRun run = train_and_evaluate(point, subset_windows(w, fit_idx), subset_windows(w, hold_idx), rs,
                                             seed, false, &fitted);
  fitted.save(o.out);

  CmdResult res;
  res.outputs.push_back(o.out);
  res.human = "trained " + family_name(fam) + " [" + point.label + "] on " + std::to_string(n_fit) +
              " samples; holdout " + metrics_json(run.metrics);
  return res;
}

CmdResult do_evaluate(const Opts& o) {
  const FittedModel fitted = load_fitted(o.model);
  const WindowTensor w = load_tensor(o.in);
  const std::vector<double> probs = fitted.predict(w);
  const MetricsReport m = evaluate_predictions(w.labels, probs, 0.5);
  write_file(o.out, metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n");

  CmdResult res;
  res.outputs.push_back(o.out);
  res.human = metrics_json(m);
  return res;
}

CmdResult do_gridsearch(const Opts& o) {
  apply_jobs(o);
  ExperimentConfig cfg = load_config(o.config);
  if (o.baseline) cfg.resampling.enabled = false;
  const SplitPlan plan = make_split_plan(cfg);

  nlohmann::json winners;
  winners["format"] = "gridsearch-winners";
  winners["version"] = 1;
  int cells = 0;
  for (const MarketConfig& mc : cfg.markets) {
    const PreparedMarket pm = prepare_market(cfg, mc);
    for (const double alpha : cfg.alphas) {
      const MarketWindows mw = make_market_windows(cfg, pm, alpha);
      for (const Family fam : cfg.families()) {
        const GridSearchResult gs = grid_search(cfg, plan, mw.tensor, fam, mc.id, alpha);
        winners["markets"][mc.id][fmt_full(alpha)][family_name(fam)] = {{"label", gs.best.label},
                                                                        {"best_index", gs.best_index},
                                                                        {"mean_scores", gs.mean_scores},
                                                                        {"notes", gs.notes}};
        ++cells;
      }
    }
  }
  write_file(o.out, winners.dump(2) + "\n");

  CmdResult res;
  res.outputs.push_back(o.out);
  res.human = "selected hyperparameters for " + std::to_string(cells) + " (market, alpha, model) cell(s)";
  return res;
}

CmdResult do_run(const Opts& o) {
  apply_jobs(o);
  ExperimentConfig cfg = load_config(o.config);
  if (!o.out.empty()) cfg.paths.out = o.out;
  cfg.seed = pick_seed(o, cfg.seed);
  if (o.baseline) cfg.resampling.enabled = false;
  if (!o.threshold_window.empty()) {
    if (o.threshold_window != "full" && o.threshold_window != "train") {
      fail(Err::Usage, "--threshold-window must be full or train");
    }
    cfg.threshold_window = o.threshold_window;
  }

  const ResultsTable table = run_experiment(cfg);

  CmdResult res;
  res.outputs = {out_path(cfg.paths.out, "results_raw.csv"), out_path(cfg.paths.out, "results_agg.csv"),
                 out_path(cfg.paths.out, "diagnostics.txt")};
  res.human = "completed " + std::to_string(table.raw.size()) + " run(s), " +
              std::to_string(table.diagnostics.size()) + " diagnostic(s); results in " + cfg.paths.out;
  return res;
}

CmdResult do_plot(const Opts& o) {
  const ExperimentConfig cfg = load_config(o.config);
  const MarketConfig* mc = nullptr;
  for (const MarketConfig& m : cfg.markets) {
    if (m.id == o.market) mc = &m;
  }
  if (!mc) fail(Err::InvalidArgument, "config defines no market '" + o.market + "'");

  const PreparedMarket pm = prepare_market(cfg, *mc);
  const MarketWindows mw = make_market_windows(cfg, pm, o.alpha);
  const FittedModel fitted = load_fitted(o.model);

  ProbabilitySeries ps;
  ps.dates = mw.tensor.sample_dates;
  ps.probs = fitted.predict(mw.tensor);
  ps.labels = mw.tensor.labels;
  ps.threshold = 0.5;
  ps.title = o.market + " alpha=" + fmt_full(o.alpha) + " model=" + family_name(fitted.family);

  const std::string stem = out_path(o.out, "probability_" + o.market + "_" + fmt_full(o.alpha));
  save_probability_csv(ps, stem + ".csv");
  save_probability_svg(ps, stem + ".svg");

  CmdResult res;
  res.outputs = {stem + ".csv", stem + ".svg"};
  res.human = "plotted " + std::to_string(ps.dates.size()) + " crash probabilities for " + o.market;
  return res;
}

void emit_ok(const std::string& cmd, const std::vector<std::string>& outputs) {
  const nlohmann::json j{{"cmd", cmd}, {"status", "ok"}, {"outputs", outputs}};
  std::cerr << j.dump() << '\n';
}

void emit_error(const std::string& cmd, const std::string& code, const std::string& message) {
  const nlohmann::json j{{"cmd", cmd}, {"status", "error"}, {"code", code}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"market crash early-warning pipeline"};
  app.require_subcommand(1);

  Opts o;
  std::string cmd = "cli";
  CmdResult result;

  auto add_seed = [&o](CLI::App* sub) {
    CLI::Option* opt = sub->add_option("--seed", o.seed, "base RNG seed (overrides CRASHWATCH_SEED and the config)");
    sub->parse_complete_callback([&o, opt] { o.has_seed = opt->count() > 0; });
  };

  CLI::App* ingest = app.add_subcommand("ingest", "align instrument calendars and write raw per-market panels");
  ingest->add_option("--config", o.config, "experiment config JSON")->required();
  ingest->add_option("--out", o.out, "output directory")->required();
  ingest->add_option("--jobs", o.jobs, "worker threads");
  ingest->callback([&] { cmd = "ingest"; result = do_ingest(o); });

  CLI::App* features = app.add_subcommand("features", "build the imputed indicator panel per market");
  features->add_option("--config", o.config, "experiment config JSON")->required();
  features->add_option("--out", o.out, "output directory")->required();
  features->add_option("--jobs", o.jobs, "worker threads");
  features->callback([&] { cmd = "features"; result = do_features(o); });

  CLI::App* label = app.add_subcommand("label", "label crash days from a returns or OHLCV file");
  label->add_option("--alpha", o.alpha, "VaR tail probability in (0,1)")->required();
  label->add_option("--in", o.in, "input CSV (date,return or OHLCV)")->required();
  label->add_option("--out", o.out, "output labels CSV")->required();
  label->callback([&] { cmd = "label"; result = do_label(o); });

  CLI::App* windows = app.add_subcommand("windows", "write lookback window tensors per market and alpha");
  windows->add_option("--config", o.config, "experiment config JSON")->required();
  windows->add_option("--out", o.out, "output directory")->required();
  windows->add_option("--jobs", o.jobs, "worker threads");
  windows->callback([&] { cmd = "windows"; result = do_windows(o); });

  CLI::App* resample = app.add_subcommand("resample", "SMOTE-ENN a window tensor and write an audit CSV");
  resample->add_option("--in", o.in, "input tensor")->required();
  resample->add_option("--out", o.out, "output tensor")->required();
  resample->add_option("--config", o.config, "experiment config JSON (resampling block)");
  add_seed(resample);
  resample->callback([&] { cmd = "resample"; result = do_resample(o); });

  CLI::App* train = app.add_subcommand("train", "train one model on a window tensor with a 80/20 holdout");
  train->add_option("--config", o.config, "experiment config JSON")->required();
  train->add_option("--model", o.model, "model family: rnn, lstm, gru, forest, boost")->required();
  train->add_option("--in", o.in, "input tensor")->required();
  train->add_option("--out", o.out, "output checkpoint")->required();
  train->add_flag("--baseline", o.baseline, "skip resampling");
  add_seed(train);
  train->callback([&] { cmd = "train"; result = do_train(o); });

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a window tensor");
  evaluate->add_option("--model", o.model, "checkpoint path")->required();
  evaluate->add_option("--in", o.in, "input tensor")->required();
  evaluate->add_option("--out", o.out, "output metrics CSV")->required();
  evaluate->callback([&] { cmd = "evaluate"; result = do_evaluate(o); });

  CLI::App* gridsearch = app.add_subcommand("gridsearch", "pick hyperparameters on the validation folds");
  gridsearch->add_option("--config", o.config, "experiment config JSON")->required();
  gridsearch->add_option("--out", o.out, "output winners JSON")->required();
  gridsearch->add_option("--jobs", o.jobs, "worker threads");
  gridsearch->add_flag("--baseline", o.baseline, "skip resampling");
  gridsearch->callback([&] { cmd = "gridsearch"; result = do_gridsearch(o); });

  CLI::App* run = app.add_subcommand("run", "run the full study and write result tables");
  run->add_option("--config", o.config, "experiment config JSON")->required();
  run->add_option("--out", o.out, "output directory (overrides config paths.out)");
  run->add_option("--jobs", o.jobs, "worker threads");
  run->add_flag("--baseline", o.baseline, "skip resampling");
  run->add_option("--threshold-window", o.threshold_window, "label threshold window: full or train");
  add_seed(run);
  run->callback([&] { cmd = "run"; result = do_run(o); });

  CLI::App* plot = app.add_subcommand("plot", "render a crash probability series for one market and alpha");
  plot->add_option("--config", o.config, "experiment config JSON")->required();
  plot->add_option("--model", o.model, "checkpoint path")->required();
  plot->add_option("--market", o.market, "market id from the config")->required();
  plot->add_option("--alpha", o.alpha, "VaR tail probability")->required();
  plot->add_option("--out", o.out, "output directory")->required();
  plot->callback([&] { cmd = "plot"; result = do_plot(o); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) emit_error(cmd, "Usage", e.what());
    return code;
  } catch (const Error& e) {
    emit_error(cmd, err_name(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error(cmd, "Unexpected", e.what());
    return 2;
  }

  std::cout << result.human << '\n';
  emit_ok(cmd, result.outputs);
  return 0;
}

}  // namespace crashwatch
