#include "crashwatch/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "crashwatch/plotting.hpp"

namespace crashwatch {

namespace {

constexpr std::uint64_t kGridTag = 0x67726964;
constexpr std::uint64_t kRepTag = 0x72657073;
constexpr std::uint64_t kResampleTag = 0x72736d70;

std::uint64_t alpha_bits(double a) { return std::bit_cast<std::uint64_t>(a); }

std::string join_path(const std::string& base, const std::string& file) {
  if (!file.empty() && file.front() == '/') return file;
  if (base.empty() || base == ".") return file;
  return base + "/" + file;
}

std::string alpha_tag(double a) { return fmt_full(a); }

std::vector<std::int64_t> date_indices(const WindowTensor& w, const DateRange& r) {
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < w.n; ++i) {
    if (r.contains(w.sample_dates[static_cast<std::size_t>(i)])) idx.push_back(i);
  }
  return idx;
}

int family_index(Family f) {
  const auto& order = family_order();
  return static_cast<int>(std::find(order.begin(), order.end(), f) - order.begin());
}

// SMOTE-ENN on flattened training windows, reshaped back for recurrent use.
WindowTensor resample_tensor(const WindowTensor& w, const ResamplingConfig& rs, std::uint64_t seed,
                             std::vector<std::string>& notes) {
  ResampleConfig rc;
  rc.smote_k = rs.smote_k;
  rc.enn_k = rs.enn_k;
  rc.target_minority_ratio = rs.ratio;
  rc.seed = seed;
  ResampleResult rr;
  try {
    rr = smote_enn(flatten_windows(w), w.labels, rc);
  } catch (const Error& e) {
    if (e.code() != Err::MinorityTooSmall && e.code() != Err::InvalidArgument) throw;
    notes.push_back(std::string("resampling skipped: ") + e.what());
    return w;
  }
  if (rr.k_clamped) {
    notes.push_back("smote_k clamped to " + std::to_string(rr.smote_k_used));
  }
  return rebuild_windows(w, rr);
}

}  // namespace

WindowTensor rebuild_windows(const WindowTensor& source, const ResampleResult& rr) {
  if (source.n == 0) fail(Err::EmptySplit, "cannot rebuild windows from an empty tensor");
  Date last = source.sample_dates.front();
  for (const Date& d : source.sample_dates) last = std::max(last, d);

  WindowTensor out;
  out.n = rr.x.rows;
  out.t = source.t;
  out.f = source.f;
  out.values = rr.x.a;
  out.labels = rr.y;
  out.feature_names = source.feature_names;
  out.sample_dates.reserve(static_cast<std::size_t>(out.n));
  for (std::size_t i = 0; i < rr.provenance.size(); ++i) {
    if (rr.removed_by_enn[i]) continue;
    if (rr.provenance[i] == Provenance::Original) {
      out.sample_dates.push_back(source.sample_dates[static_cast<std::size_t>(rr.origin[i])]);
    } else {
      out.sample_dates.push_back(last);
    }
  }
  return out;
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Rnn: return "rnn";
    case Family::Lstm: return "lstm";
    case Family::Gru: return "gru";
    case Family::Forest: return "forest";
    case Family::Boost: return "boost";
  }
  return "rnn";
}

Family family_from_name(const std::string& name) {
  for (Family f : family_order()) {
    if (family_name(f) == name) return f;
  }
  fail(Err::InvalidArgument, "unknown model family: " + name);
}

const std::vector<Family>& family_order() {
  static const std::vector<Family> order{Family::Rnn, Family::Lstm, Family::Gru, Family::Forest, Family::Boost};
  return order;
}

std::vector<Family> ExperimentConfig::families() const {
  std::vector<Family> out;
  if (rnn) out.push_back(Family::Rnn);
  if (lstm) out.push_back(Family::Lstm);
  if (gru) out.push_back(Family::Gru);
  if (forest) out.push_back(Family::Forest);
  if (boost) out.push_back(Family::Boost);
  return out;
}

namespace {

RnnGrid parse_rnn_grid(const nlohmann::json& j) {
  RnnGrid g;
  if (j.contains("neurons")) g.neurons = j.at("neurons").get<std::vector<int>>();
  if (j.contains("layers")) g.layers = j.at("layers").get<std::vector<int>>();
  if (j.contains("learning_rate")) g.learning_rate = j.at("learning_rate").get<std::vector<double>>();
  g.max_epochs = j.value("max_epochs", g.max_epochs);
  g.patience = j.value("patience", g.patience);
  g.l1 = j.value("l1", g.l1);
  g.l2 = j.value("l2", g.l2);
  g.batch_size = j.value("batch_size", g.batch_size);
  if (j.value("state_act", "relu") == "tanh") g.state_act = StateAct::Tanh;
  if (g.neurons.empty() || g.layers.empty() || g.learning_rate.empty()) {
    fail(Err::InvalidArgument, "recurrent grid lists must be non-empty");
  }
  return g;
}

ForestGrid parse_forest_grid(const nlohmann::json& j) {
  ForestGrid g;
  if (j.contains("n_estimators")) g.n_estimators = j.at("n_estimators").get<std::vector<int>>();
  if (j.contains("max_depth")) g.max_depth = j.at("max_depth").get<std::vector<int>>();
  g.min_samples_leaf = j.value("min_samples_leaf", g.min_samples_leaf);
  if (g.n_estimators.empty() || g.max_depth.empty()) fail(Err::InvalidArgument, "forest grid lists must be non-empty");
  return g;
}

BoostGrid parse_boost_grid(const nlohmann::json& j) {
  BoostGrid g;
  if (j.contains("n_estimators")) g.n_estimators = j.at("n_estimators").get<std::vector<int>>();
  if (j.contains("learning_rate")) g.learning_rate = j.at("learning_rate").get<std::vector<double>>();
  if (j.contains("max_depth")) g.max_depth = j.at("max_depth").get<std::vector<int>>();
  g.lambda = j.value("lambda", g.lambda);
  if (g.n_estimators.empty() || g.learning_rate.empty() || g.max_depth.empty()) {
    fail(Err::InvalidArgument, "boost grid lists must be non-empty");
  }
  return g;
}

DateRange parse_range(const nlohmann::json& j) {
  const auto v = j.get<std::vector<std::string>>();
  if (v.size() != 2) fail(Err::InvalidArgument, "date ranges are [start, end] pairs");
  DateRange r{Date::from_iso(v[0]), Date::from_iso(v[1])};
  if (r.end < r.start) fail(Err::InvalidArgument, "date range ends before it starts");
  return r;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::Io, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    for (const auto& m : j.at("markets")) {
      MarketConfig mc;
      mc.id = m.at("id").get<std::string>();
      mc.anchor = m.value("anchor", mc.id);
      for (const auto& inst : m.at("instruments")) {
        mc.instruments.push_back({inst.at("id").get<std::string>(), inst.at("file").get<std::string>()});
      }
      if (m.contains("expected_predictors")) {
        mc.expected_predictors = m.at("expected_predictors").get<std::int64_t>();
      }
      cfg.markets.push_back(std::move(mc));
    }
    if (j.contains("alphas")) cfg.alphas = j.at("alphas").get<std::vector<double>>();
    if (j.contains("plan")) {
      bool any_test = false;
      for (const auto& f : j.at("plan").at("folds")) {
        Fold fold;
        fold.train = parse_range(f.at("train"));
        fold.eval = parse_range(f.at("eval"));
        fold.is_test = f.value("role", "validation") == "test";
        any_test |= fold.is_test;
        cfg.plan_folds.push_back(fold);
      }
      if (!any_test && !cfg.plan_folds.empty()) cfg.plan_folds.back().is_test = true;
    }
    const auto& models = j.at("models");
    if (models.contains("rnn")) cfg.rnn = parse_rnn_grid(models.at("rnn"));
    if (models.contains("lstm")) cfg.lstm = parse_rnn_grid(models.at("lstm"));
    if (models.contains("gru")) cfg.gru = parse_rnn_grid(models.at("gru"));
    if (models.contains("forest")) cfg.forest = parse_forest_grid(models.at("forest"));
    if (models.contains("boost")) cfg.boost = parse_boost_grid(models.at("boost"));
    if (j.contains("resampling")) {
      const auto& r = j.at("resampling");
      cfg.resampling.enabled = r.value("enabled", true);
      cfg.resampling.smote_k = r.value("smote_k", 5);
      cfg.resampling.enn_k = r.value("enn_k", 3);
      cfg.resampling.ratio = r.value("ratio", 1.0);
    }
    cfg.repetitions = j.value("repetitions", 10);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("paths")) {
      cfg.paths.data = j.at("paths").value("data", ".");
      cfg.paths.out = j.at("paths").value("out", "out");
    }
    cfg.timesteps = j.value("timesteps", 7);
    cfg.threshold_window = j.value("threshold_window", "full");
    if (j.contains("catalog")) {
      const auto& c = j.at("catalog");
      if (c.contains("lags")) cfg.lags.windows = c.at("lags").get<std::vector<int>>();
      if (c.contains("extra_raw")) cfg.extra_raw_fields = c.at("extra_raw").get<std::vector<std::string>>();
    }
    cfg.knn_impute_k = j.value("knn_impute_k", 5);
    cfg.max_missing_frac = j.value("max_missing_frac", 0.2);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::Io, std::string("config field error: ") + e.what());
  }

  if (cfg.markets.empty()) fail(Err::InvalidArgument, "config lists no markets");
  if (cfg.alphas.empty()) fail(Err::InvalidArgument, "config lists no alphas");
  if (cfg.repetitions < 1) fail(Err::InvalidArgument, "repetitions must be >= 1");
  if (cfg.families().empty()) fail(Err::InvalidArgument, "config enables no model family");
  if (cfg.threshold_window != "full" && cfg.threshold_window != "train") {
    fail(Err::InvalidArgument, "threshold_window must be \"full\" or \"train\"");
  }
  if (cfg.timesteps < 1) fail(Err::InvalidArgument, "timesteps must be >= 1");
  cfg.lags.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

SplitPlan make_split_plan(const ExperimentConfig& cfg) {
  SplitPlan plan;
  if (!cfg.plan_folds.empty()) {
    plan.folds = cfg.plan_folds;
  } else {
    auto r = [](const char* a, const char* b) { return DateRange{Date::from_iso(a), Date::from_iso(b)}; };
    plan.folds.push_back({r("2010-01-01", "2011-12-31"), r("2012-01-01", "2013-12-31"), false});
    plan.folds.push_back({r("2010-01-01", "2013-12-31"), r("2014-01-01", "2015-12-31"), false});
    plan.folds.push_back({r("2010-01-01", "2015-12-31"), r("2016-01-01", "2019-12-31"), false});
    plan.folds.push_back({r("2010-01-01", "2019-12-31"), r("2020-01-01", "2023-12-31"), true});
  }
  check_plan(plan);
  return plan;
}

void check_plan(const SplitPlan& plan) {
  if (plan.folds.empty()) fail(Err::InvalidArgument, "split plan has no folds");
  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    const Fold& f = plan.folds[i];
    if (f.train.end < f.train.start || f.eval.end < f.eval.start) {
      fail(Err::InvalidArgument, "fold " + std::to_string(i + 1) + " has an inverted range");
    }
    if (!(f.train.end < f.eval.start)) {
      fail(Err::InvalidArgument, "fold " + std::to_string(i + 1) + " leaks: train end >= eval start");
    }
    const bool should_be_test = i + 1 == plan.folds.size();
    if (f.is_test != should_be_test) {
      fail(Err::InvalidArgument, "exactly the final fold must be the test fold");
    }
  }
}

PreparedMarket prepare_market(const ExperimentConfig& cfg, const MarketConfig& market) {
  if (market.instruments.empty()) fail(Err::InvalidArgument, "market " + market.id + " lists no instruments");
  std::vector<PriceSeries> series;
  series.reserve(market.instruments.size());
  for (const auto& inst : market.instruments) {
    series.push_back(load_ohlcv_csv(join_path(cfg.paths.data, inst.file), inst.id));
  }
  FeaturePanel aligned = align_calendars(series, market.anchor);
  const Series anchor_returns = simple_return(aligned.col(market.anchor + ".adj_close"));

  std::vector<IndicatorSpec> specs;
  for (const auto& inst : market.instruments) {
    const auto inst_specs = full_instrument_specs(inst.id);
    specs.insert(specs.end(), inst_specs.begin(), inst_specs.end());
  }
  for (const auto& field : cfg.extra_raw_fields) {
    IndicatorSpec s;
    s.kind = IndicatorKind::Raw;
    s.instrument = market.anchor;
    s.field = field;
    specs.push_back(s);
  }

  FeaturePanel feats = build_catalog(aligned, specs, cfg.lags);
  feats = drop_sparse_columns(feats, cfg.max_missing_frac);
  FeaturePanel trimmed = trim_warmup(feats);

  // Trimming only drops a prefix, so the return series shifts by the offset
  // of the first surviving date.
  std::size_t offset = 0;
  while (offset < aligned.dates.size() && !trimmed.dates.empty() && aligned.dates[offset] != trimmed.dates.front()) {
    ++offset;
  }
  Series returns(anchor_returns.begin() + static_cast<std::ptrdiff_t>(offset), anchor_returns.end());

  PreparedMarket out;
  out.id = market.id;
  out.panel = knn_impute(trimmed, cfg.knn_impute_k);
  out.returns = std::move(returns);
  if (market.expected_predictors && out.panel.n_cols() != *market.expected_predictors) {
    fail(Err::InvalidArgument, "market " + market.id + " built " + std::to_string(out.panel.n_cols()) +
                                   " predictors, expected " + std::to_string(*market.expected_predictors));
  }
  return out;
}

MarketWindows make_market_windows(const ExperimentConfig& cfg, const PreparedMarket& market, double alpha) {
  Series threshold_src;
  if (cfg.threshold_window == "train") {
    const SplitPlan plan = make_split_plan(cfg);
    const Date cutoff = plan.folds.back().train.end;
    for (std::size_t i = 0; i < market.returns.size(); ++i) {
      if (market.panel.dates[i] <= cutoff) threshold_src.push_back(market.returns[i]);
    }
  } else {
    threshold_src = market.returns;
  }
  const VarScenario scenario = make_scenario(threshold_src, alpha);

  MarketWindows out;
  out.labels = label_crashes(market.panel.dates, market.returns, scenario);
  out.tensor = make_windows(market.panel, out.labels, cfg.timesteps);
  return out;
}

std::vector<GridPoint> enumerate_grid(const ExperimentConfig& cfg, Family family) {
  std::vector<GridPoint> points;
  auto rnn_points = [&](const RnnGrid& g, Cell cell) {
    for (int n : g.neurons) {
      for (int l : g.layers) {
        for (double lr : g.learning_rate) {
          GridPoint p;
          p.family = family;
          p.rnn.cell = cell;
          p.rnn.neurons = n;
          p.rnn.layers = l;
          p.rnn.learning_rate = lr;
          p.rnn.max_epochs = g.max_epochs;
          p.rnn.patience = g.patience;
          p.rnn.l1 = g.l1;
          p.rnn.l2 = g.l2;
          p.rnn.batch_size = g.batch_size;
          p.rnn.state_act = g.state_act;
          p.label = "neurons=" + std::to_string(n) + " layers=" + std::to_string(l) + " lr=" + fmt_full(lr);
          points.push_back(std::move(p));
        }
      }
    }
  };
  switch (family) {
    case Family::Rnn:
      if (!cfg.rnn) fail(Err::InvalidArgument, "rnn grid not configured");
      rnn_points(*cfg.rnn, Cell::Simple);
      break;
    case Family::Lstm:
      if (!cfg.lstm) fail(Err::InvalidArgument, "lstm grid not configured");
      rnn_points(*cfg.lstm, Cell::Lstm);
      break;
    case Family::Gru:
      if (!cfg.gru) fail(Err::InvalidArgument, "gru grid not configured");
      rnn_points(*cfg.gru, Cell::Gru);
      break;
    case Family::Forest:
      if (!cfg.forest) fail(Err::InvalidArgument, "forest grid not configured");
      for (int ne : cfg.forest->n_estimators) {
        for (int md : cfg.forest->max_depth) {
          GridPoint p;
          p.family = family;
          p.forest.n_estimators = ne;
          p.forest.max_depth = md;
          p.forest.min_samples_leaf = cfg.forest->min_samples_leaf;
          p.label = "trees=" + std::to_string(ne) + " depth=" + std::to_string(md);
          points.push_back(std::move(p));
        }
      }
      break;
    case Family::Boost:
      if (!cfg.boost) fail(Err::InvalidArgument, "boost grid not configured");
      for (int ne : cfg.boost->n_estimators) {
        for (double lr : cfg.boost->learning_rate) {
          for (int md : cfg.boost->max_depth) {
            GridPoint p;
            p.family = family;
            p.boost.n_estimators = ne;
            p.boost.learning_rate = lr;
            p.boost.max_depth = md;
            p.boost.lambda = cfg.boost->lambda;
            p.label = "rounds=" + std::to_string(ne) + " lr=" + fmt_full(lr) + " depth=" + std::to_string(md);
            points.push_back(std::move(p));
          }
        }
      }
      break;
  }
  return points;
}

std::vector<double> FittedModel::predict(const WindowTensor& w) const {
  switch (family) {
    case Family::Rnn:
    case Family::Lstm:
    case Family::Gru: {
      if (!standardizer || !net) fail(Err::InvalidArgument, "recurrent model is missing its fitted state");
      return net->predict_proba(apply_standardizer(w, *standardizer));
    }
    case Family::Forest: return predict_forest(forest, flatten_windows(w));
    case Family::Boost: return predict_boost(boost, flatten_windows(w));
  }
  fail(Err::InvalidArgument, "unknown family");
}

void FittedModel::save(const std::string& path) const {
  switch (family) {
    case Family::Forest: save_forest(forest, path); return;
    case Family::Boost: save_boost(boost, path); return;
    default: break;
  }
  if (!standardizer || !net) fail(Err::InvalidArgument, "recurrent model is missing its fitted state");
  const RnnHyper& hy = net->hyper();
  nlohmann::json j;
  j["format"] = "fitted-model";
  j["version"] = 1;
  j["family"] = family_name(family);
  j["standardizer"] = {{"mean", standardizer->mean},
                       {"stddev", standardizer->stddev},
                       {"kept", standardizer->kept},
                       {"kept_names", standardizer->kept_names}};
  j["net"] = {{"cell", cell_name(hy.cell)},
              {"neurons", hy.neurons},
              {"layers", hy.layers},
              {"learning_rate", hy.learning_rate},
              {"max_epochs", hy.max_epochs},
              {"patience", hy.patience},
              {"l1", hy.l1},
              {"l2", hy.l2},
              {"batch_size", hy.batch_size},
              {"seed", hy.seed},
              {"state_act", hy.state_act == StateAct::Relu ? "relu" : "tanh"},
              {"input_dim", net->input_dim()},
              {"n_params", static_cast<std::int64_t>(net->params().size())}};
  std::string blob = j.dump();
  blob.push_back('\n');
  const std::size_t base = blob.size();
  blob.resize(base + net->params().size() * sizeof(double));
  std::memcpy(blob.data() + base, net->params().data(), net->params().size() * sizeof(double));
  write_file(path, blob);
}

FittedModel load_fitted(const std::string& path) {
  const std::string blob = read_file(path);
  const std::size_t nl = blob.find('\n');
  const std::string head = nl == std::string::npos ? blob : blob.substr(0, nl);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception&) {
    fail(Err::Io, "not a model file: " + path);
  }
  const std::string format = j.value("format", "");
  FittedModel m;
  if (format == "forest-model") {
    m.family = Family::Forest;
    m.forest = load_forest(path);
    return m;
  }
  if (format == "boost-model") {
    m.family = Family::Boost;
    m.boost = load_boost(path);
    return m;
  }
  if (format != "fitted-model") fail(Err::Io, "not a model file: " + path);

  m.family = family_from_name(j.at("family").get<std::string>());
  Standardizer st;
  st.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
  st.stddev = j.at("standardizer").at("stddev").get<std::vector<double>>();
  st.kept = j.at("standardizer").at("kept").get<std::vector<std::uint8_t>>();
  st.kept_names = j.at("standardizer").at("kept_names").get<std::vector<std::string>>();
  st.n_kept = static_cast<std::int64_t>(st.kept_names.size());
  m.standardizer = std::move(st);

  const auto& n = j.at("net");
  RnnHyper hy;
  hy.cell = cell_from_name(n.at("cell").get<std::string>());
  hy.neurons = n.at("neurons").get<int>();
  hy.layers = n.at("layers").get<int>();
  hy.learning_rate = n.at("learning_rate").get<double>();
  hy.max_epochs = n.at("max_epochs").get<int>();
  hy.patience = n.at("patience").get<int>();
  hy.l1 = n.at("l1").get<double>();
  hy.l2 = n.at("l2").get<double>();
  hy.batch_size = n.at("batch_size").get<int>();
  hy.seed = n.at("seed").get<std::uint64_t>();
  hy.state_act = n.at("state_act").get<std::string>() == "tanh" ? StateAct::Tanh : StateAct::Relu;
  SeqNet net(hy, n.at("input_dim").get<std::int64_t>());
  const auto want = static_cast<std::size_t>(n.at("n_params").get<std::int64_t>());
  if (net.params().size() != want || nl == std::string::npos || blob.size() - nl - 1 != want * sizeof(double)) {
    fail(Err::Io, "model weight blob does not match its declared architecture");
  }
  std::memcpy(net.params().data(), blob.data() + nl + 1, want * sizeof(double));
  m.net = std::move(net);
  return m;
}

PipelineRun train_and_evaluate(const GridPoint& point, const WindowTensor& train, const WindowTensor& eval,
                               const ResamplingConfig& rs, std::uint64_t seed, bool final_mode,
                               FittedModel* out_model) {
  if (train.n == 0) fail(Err::EmptySplit, "training split is empty");
  if (eval.n == 0) fail(Err::EmptySplit, "evaluation split is empty");
  PipelineRun out;
  const std::uint64_t resample_seed = mix_seed(seed, kResampleTag);

  if (point.family == Family::Forest || point.family == Family::Boost) {
    Matrix x = flatten_windows(train);
    std::vector<std::uint8_t> y = train.labels;
    if (rs.enabled) {
      WindowTensor rt = resample_tensor(train, rs, resample_seed, out.notes);
      x = flatten_windows(rt);
      y = rt.labels;
    }
    const Matrix xe = flatten_windows(eval);
    if (point.family == Family::Forest) {
      ForestHyper hy = point.forest;
      hy.seed = seed;
      ForestModel m = fit_forest(x, y, hy);
      out.probs = predict_forest(m, xe);
      if (out_model) {
        out_model->family = Family::Forest;
        out_model->forest = std::move(m);
      }
    } else {
      BoostHyper hy = point.boost;
      hy.seed = seed;
      BoostModel m = fit_boost(x, y, hy);
      out.probs = predict_boost(m, xe);
      if (out_model) {
        out_model->family = Family::Boost;
        out_model->boost = std::move(m);
      }
    }
  } else {
    std::vector<std::int64_t> fit_idx;
    std::vector<std::int64_t> mon_idx;
    if (final_mode) {
      if (train.n < 2) fail(Err::EmptySplit, "need at least 2 training samples for an early-stopping split");
      // Chronological 80/20: windows are already in date order.
      std::int64_t n_fit = train.n * 8 / 10;
      n_fit = std::clamp<std::int64_t>(n_fit, 1, train.n - 1);
      for (std::int64_t i = 0; i < n_fit; ++i) fit_idx.push_back(i);
      for (std::int64_t i = n_fit; i < train.n; ++i) mon_idx.push_back(i);
    } else {
      fit_idx.resize(static_cast<std::size_t>(train.n));
      std::iota(fit_idx.begin(), fit_idx.end(), std::int64_t{0});
    }

    const Standardizer st = fit_standardizer(train, fit_idx);
    WindowTensor zfit = apply_standardizer(subset_windows(train, fit_idx), st);
    const WindowTensor zmon =
        final_mode ? apply_standardizer(subset_windows(train, mon_idx), st) : apply_standardizer(eval, st);
    const WindowTensor zeval = apply_standardizer(eval, st);

    if (rs.enabled) zfit = resample_tensor(zfit, rs, resample_seed, out.notes);

    RnnHyper hy = point.rnn;
    hy.seed = seed;
    SeqNet net(hy, zfit.f);
    const TrainHistory hist = train_net(net, zfit, zmon);
    out.diverged = hist.diverged;
    if (hist.diverged) out.notes.push_back("training diverged at epoch " + std::to_string(hist.stopped_epoch));
    if (hist.monitor_is_loss) out.notes.push_back("early stopping monitored loss (no validation positives)");
    out.probs = net.predict_proba(zeval);
    if (out_model) {
      out_model->family = point.family;
      out_model->standardizer = st;
      out_model->net = std::move(net);
    }
  }

  out.metrics = evaluate_predictions(eval.labels, out.probs, 0.5);
  return out;
}

GridSearchResult grid_search(const ExperimentConfig& cfg, const SplitPlan& plan, const WindowTensor& tensor,
                             Family family, const std::string& market, double alpha) {
  const auto points = enumerate_grid(cfg, family);
  if (points.empty()) fail(Err::InvalidArgument, "empty hyperparameter grid");

  std::vector<const Fold*> val_folds;
  for (const Fold& f : plan.folds) {
    if (!f.is_test) val_folds.push_back(&f);
  }

  GridSearchResult res;
  res.mean_scores.assign(points.size(), 0.0);
  const std::uint64_t base =
      mix_seed(mix_seed(cfg.seed, kGridTag), hash_str(market), alpha_bits(alpha),
               static_cast<std::uint64_t>(family_index(family)));

  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    double sum = 0.0;
    std::int64_t cnt = 0;
    for (std::size_t fi = 0; fi < val_folds.size(); ++fi) {
      const Fold& fold = *val_folds[fi];
      const auto tr_idx = date_indices(tensor, fold.train);
      const auto ev_idx = date_indices(tensor, fold.eval);
      ++cnt;
      if (tr_idx.empty() || ev_idx.empty()) {
        res.notes.push_back(family_name(family) + " point " + std::to_string(pi) + " fold " +
                            std::to_string(fi + 1) + ": no samples in range");
        continue;
      }
      const std::uint64_t seed = mix_seed(base, static_cast<std::uint64_t>(pi), static_cast<std::uint64_t>(fi));
      try {
        const PipelineRun run = train_and_evaluate(points[pi], subset_windows(tensor, tr_idx),
                                                   subset_windows(tensor, ev_idx), cfg.resampling, seed, false);
        sum += run.metrics.auc_prc.value_or(0.0);
        for (const auto& note : run.notes) {
          res.notes.push_back(family_name(family) + " point " + std::to_string(pi) + " fold " +
                              std::to_string(fi + 1) + ": " + note);
        }
      } catch (const Error& e) {
        res.notes.push_back(family_name(family) + " point " + std::to_string(pi) + " fold " +
                            std::to_string(fi + 1) + " failed: " + e.what());
      }
    }
    res.mean_scores[pi] = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
  }

  res.best_index = 0;
  for (std::size_t pi = 1; pi < points.size(); ++pi) {
    if (res.mean_scores[pi] > res.mean_scores[static_cast<std::size_t>(res.best_index)]) {
      res.best_index = static_cast<int>(pi);
    }
  }
  res.best = points[static_cast<std::size_t>(res.best_index)];
  return res;
}

std::vector<AggRow> aggregate_rows(const std::vector<RawRow>& raw, const std::vector<double>& alphas,
                                   const std::vector<Family>& families) {
  std::vector<AggRow> agg;
  for (double alpha : alphas) {
    for (Family fam : families) {
      AggRow row;
      row.alpha = alpha;
      row.family = fam;
      double s_ifar = 0, s_hit = 0, s_bal = 0, s_auc = 0;
      int n_ifar = 0, n_hit = 0, n_bal = 0, n_auc = 0;
      for (const RawRow& r : raw) {
        if (r.family != fam || r.alpha != alpha) continue;
        ++row.runs;
        if (r.metrics.ifar) s_ifar += *r.metrics.ifar, ++n_ifar;
        if (r.metrics.hit_rate) s_hit += *r.metrics.hit_rate, ++n_hit;
        if (r.metrics.bal_acc) s_bal += *r.metrics.bal_acc, ++n_bal;
        if (r.metrics.auc_prc) s_auc += *r.metrics.auc_prc, ++n_auc;
      }
      if (row.runs == 0) continue;
      if (n_ifar) row.ifar = s_ifar / n_ifar;
      if (n_hit) row.hit_rate = s_hit / n_hit;
      if (n_bal) row.bal_acc = s_bal / n_bal;
      if (n_auc) row.auc_prc = s_auc / n_auc;
      agg.push_back(row);
    }
  }
  return agg;
}

std::string results_raw_csv(const std::vector<RawRow>& raw) {
  std::ostringstream os;
  os << "market,alpha,model,run,seed," << metrics_csv_header() << '\n';
  for (const RawRow& r : raw) {
    os << r.market << ',' << fmt_full(r.alpha) << ',' << family_name(r.family) << ',' << r.run << ',' << r.seed
       << ',' << metrics_csv_row(r.metrics) << '\n';
  }
  return os.str();
}

std::string results_agg_csv(const std::vector<AggRow>& agg) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt_full(*v) : std::string("NOT_DEFINED"); };
  std::ostringstream os;
  os << "alpha,model,ifar,hit_rate,bal_acc,auc_prc,runs\n";
  for (const AggRow& r : agg) {
    os << fmt_full(r.alpha) << ',' << family_name(r.family) << ',' << opt(r.ifar) << ',' << opt(r.hit_rate) << ','
       << opt(r.bal_acc) << ',' << opt(r.auc_prc) << ',' << r.runs << '\n';
  }
  return os.str();
}

ResultsTable run_experiment(const ExperimentConfig& cfg) {
  const SplitPlan plan = make_split_plan(cfg);
  const Fold& test_fold = plan.folds.back();
  const auto fams = cfg.families();

  ResultsTable table;
  auto diag = [&](const std::string& msg) { table.diagnostics.push_back(msg); };

  for (const MarketConfig& mc : cfg.markets) {
    PreparedMarket pm;
    try {
      pm = prepare_market(cfg, mc);
    } catch (const Error& e) {
      diag("market " + mc.id + ": " + e.what());
      continue;
    }
    for (double alpha : cfg.alphas) {
      const std::string cell_tag = "market " + mc.id + " alpha " + alpha_tag(alpha);
      MarketWindows mw;
      try {
        mw = make_market_windows(cfg, pm, alpha);
      } catch (const Error& e) {
        diag(cell_tag + ": " + e.what());
        continue;
      }
      const auto tr_idx = date_indices(mw.tensor, test_fold.train);
      const auto te_idx = date_indices(mw.tensor, test_fold.eval);
      if (tr_idx.empty() || te_idx.empty()) {
        diag(cell_tag + ": " + err_name(Err::RangeOutsideData) +
             ": test fold selects no samples (train " + std::to_string(tr_idx.size()) + ", test " +
             std::to_string(te_idx.size()) + ")");
        continue;
      }
      const WindowTensor train_t = subset_windows(mw.tensor, tr_idx);
      const WindowTensor test_t = subset_windows(mw.tensor, te_idx);

      // No-leakage guard: latest training label strictly precedes the test range.
      Date max_train = train_t.sample_dates.front();
      for (const Date& d : train_t.sample_dates) max_train = std::max(max_train, d);
      Date min_test = test_t.sample_dates.front();
      for (const Date& d : test_t.sample_dates) min_test = std::min(min_test, d);
      if (!(max_train < min_test)) {
        diag(cell_tag + ": leakage check failed");
        continue;
      }
      const std::vector<double> test_bytes_guard = test_t.values;

      struct FamOutcome {
        bool has_model = false;
        FittedModel model;
        std::vector<double> rep0_probs;
        double mean_auc = -1.0;
      };
      std::vector<FamOutcome> outcomes(fams.size());

      for (std::size_t fidx = 0; fidx < fams.size(); ++fidx) {
        const Family fam = fams[fidx];
        GridSearchResult gs;
        try {
          gs = grid_search(cfg, plan, mw.tensor, fam, mc.id, alpha);
        } catch (const Error& e) {
          diag(cell_tag + " " + family_name(fam) + " grid search failed: " + e.what());
          continue;
        }
        for (const auto& note : gs.notes) diag(cell_tag + " " + note);
        diag(cell_tag + " " + family_name(fam) + " selected " + gs.best.label);

        double auc_sum = 0.0;
        int auc_cnt = 0;
        const std::uint64_t rep_base = mix_seed(mix_seed(cfg.seed, kRepTag), hash_str(mc.id), alpha_bits(alpha),
                                                static_cast<std::uint64_t>(family_index(fam)));
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
          const std::uint64_t seed = mix_seed(rep_base, static_cast<std::uint64_t>(rep));
          try {
            FittedModel fitted;
            const PipelineRun run = train_and_evaluate(gs.best, train_t, test_t, cfg.resampling, seed, true,
                                                       rep == 0 ? &fitted : nullptr);
            for (const auto& note : run.notes) {
              diag(cell_tag + " " + family_name(fam) + " rep " + std::to_string(rep) + ": " + note);
            }
            table.raw.push_back({mc.id, alpha, fam, rep, seed, run.metrics});
            if (run.metrics.auc_prc) {
              auc_sum += *run.metrics.auc_prc;
              ++auc_cnt;
            }
            if (rep == 0) {
              auto& oc = outcomes[fidx];
              oc.has_model = true;
              oc.model = std::move(fitted);
              oc.rep0_probs = run.probs;
              const std::string ckpt = join_path(cfg.paths.out, "checkpoints/" + mc.id + "_" + alpha_tag(alpha) +
                                                                    "_" + family_name(fam) + ".ckpt");
              oc.model.save(ckpt);
            }
          } catch (const Error& e) {
            diag(cell_tag + " " + family_name(fam) + " rep " + std::to_string(rep) + " failed: " + e.what());
          }
        }
        if (auc_cnt > 0) outcomes[fidx].mean_auc = auc_sum / auc_cnt;
      }

      if (test_t.values != test_bytes_guard) {
        fail(Err::InvalidArgument, cell_tag + ": test rows were mutated during training");
      }

      // Probability series from the strongest family's first repetition.
      int best_fam = -1;
      for (std::size_t fidx = 0; fidx < fams.size(); ++fidx) {
        if (!outcomes[fidx].has_model) continue;
        if (best_fam < 0 || outcomes[fidx].mean_auc > outcomes[static_cast<std::size_t>(best_fam)].mean_auc) {
          best_fam = static_cast<int>(fidx);
        }
      }
      if (best_fam >= 0) {
        const auto& oc = outcomes[static_cast<std::size_t>(best_fam)];
        ProbabilitySeries ps;
        ps.dates = test_t.sample_dates;
        ps.probs = oc.rep0_probs;
        ps.labels = test_t.labels;
        ps.threshold = 0.5;
        ps.title = mc.id + " alpha=" + alpha_tag(alpha) + " model=" + family_name(fams[static_cast<std::size_t>(best_fam)]);
        const std::string stem = join_path(cfg.paths.out, "probability_" + mc.id + "_" + alpha_tag(alpha));
        save_probability_csv(ps, stem + ".csv");
        save_probability_svg(ps, stem + ".svg");
      }
    }
  }

  table.agg = aggregate_rows(table.raw, cfg.alphas, fams);
  write_file(join_path(cfg.paths.out, "results_raw.csv"), results_raw_csv(table.raw));
  write_file(join_path(cfg.paths.out, "results_agg.csv"), results_agg_csv(table.agg));
  std::string diag_text;
  for (const auto& d : table.diagnostics) diag_text += d + "\n";
  write_file(join_path(cfg.paths.out, "diagnostics.txt"), diag_text);
  return table;
}

}  // namespace crashwatch
