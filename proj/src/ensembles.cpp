#include "crashwatch/ensembles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "crashwatch/parallel.hpp"

namespace crashwatch {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SplitChoice {
  bool found = false;
  std::int64_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline double gini(double n, double n1) {
  if (n == 0.0) return 0.0;
  const double p1 = n1 / n;
  const double p0 = 1.0 - p1;
  return 1.0 - p1 * p1 - p0 * p0;
}

SplitChoice eval_gini_feature(const Matrix& x, const std::vector<std::uint8_t>& y,
                              const std::vector<std::int64_t>& rows, std::int64_t f, double parent_impurity,
                              std::int64_t n1, int min_samples_leaf) {
  const auto n = static_cast<std::int64_t>(rows.size());
  std::vector<std::pair<double, std::uint8_t>> v;
  v.reserve(rows.size());
  for (std::int64_t r : rows) v.emplace_back(x(r, f), y[static_cast<std::size_t>(r)]);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  SplitChoice best;
  best.feature = f;
  std::int64_t n1l = 0;
  for (std::int64_t i = 1; i < n; ++i) {
    n1l += v[static_cast<std::size_t>(i - 1)].second;
    if (v[static_cast<std::size_t>(i)].first == v[static_cast<std::size_t>(i - 1)].first) continue;
    const std::int64_t nl = i;
    const std::int64_t nr = n - i;
    if (nl < min_samples_leaf || nr < min_samples_leaf) continue;
    const double thr = 0.5 * (v[static_cast<std::size_t>(i - 1)].first + v[static_cast<std::size_t>(i)].first);
    const double wl = static_cast<double>(nl) / static_cast<double>(n);
    const double wr = static_cast<double>(nr) / static_cast<double>(n);
    const double gain = parent_impurity - wl * gini(static_cast<double>(nl), static_cast<double>(n1l)) -
                        wr * gini(static_cast<double>(nr), static_cast<double>(n1 - n1l));
    // The scan ascends, so strict improvement keeps the lowest threshold.
    if (gain > best.gain) {
      best.found = true;
      best.gain = gain;
      best.threshold = thr;
    }
  }
  if (best.found && !(best.gain > 0.0)) best.found = false;
  return best;
}

SplitChoice eval_newton_feature(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                                const std::vector<std::int64_t>& rows, std::int64_t f, double lambda,
                                double gsum, double hsum) {
  const auto n = static_cast<std::int64_t>(rows.size());
  struct Item {
    double v, g, h;
  };
  std::vector<Item> v;
  v.reserve(rows.size());
  for (std::int64_t r : rows) {
    v.push_back({x(r, f), g[static_cast<std::size_t>(r)], h[static_cast<std::size_t>(r)]});
  }
  std::sort(v.begin(), v.end(), [](const Item& a, const Item& b) { return a.v < b.v; });

  const double parent = gsum * gsum / (hsum + lambda);
  SplitChoice best;
  best.feature = f;
  double gl = 0.0;
  double hl = 0.0;
  for (std::int64_t i = 1; i < n; ++i) {
    gl += v[static_cast<std::size_t>(i - 1)].g;
    hl += v[static_cast<std::size_t>(i - 1)].h;
    if (v[static_cast<std::size_t>(i)].v == v[static_cast<std::size_t>(i - 1)].v) continue;
    const double gr = gsum - gl;
    const double hr = hsum - hl;
    const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
    if (gain > best.gain) {
      best.found = true;
      best.gain = gain;
      best.threshold = 0.5 * (v[static_cast<std::size_t>(i - 1)].v + v[static_cast<std::size_t>(i)].v);
    }
  }
  if (best.found && !(best.gain > 0.0)) best.found = false;
  return best;
}

// Evaluates the given features in parallel, then reduces in ascending feature
// order so equal gains resolve to the lowest feature index.
template <class Eval>
SplitChoice best_split(std::vector<std::int64_t> feats, const Eval& eval) {
  std::sort(feats.begin(), feats.end());
  std::vector<SplitChoice> slots(feats.size());
  par::for_each_index(static_cast<std::int64_t>(feats.size()), [&](std::int64_t i) {
    slots[static_cast<std::size_t>(i)] = eval(feats[static_cast<std::size_t>(i)]);
  });
  SplitChoice best;
  for (const SplitChoice& s : slots) {
    if (!s.found) continue;
    if (!best.found || s.gain > best.gain) best = s;
  }
  return best;
}

struct GiniBuilder {
  const Matrix& x;
  const std::vector<std::uint8_t>& y;
  int max_depth;
  int min_samples_leaf;
  int mtry;
  Rng& rng;
  std::vector<TreeNode>& nodes;

  std::int64_t build(const std::vector<std::int64_t>& rows, int depth) {
    const auto n = static_cast<std::int64_t>(rows.size());
    std::int64_t n1 = 0;
    for (std::int64_t r : rows) n1 += y[static_cast<std::size_t>(r)];
    const double freq = static_cast<double>(n1) / static_cast<double>(n);

    SplitChoice split;
    if (depth < max_depth && n1 > 0 && n1 < n && n >= 2 * min_samples_leaf) {
      // Partial Fisher-Yates draw of mtry distinct features.
      std::vector<std::int64_t> feats(static_cast<std::size_t>(x.cols));
      std::iota(feats.begin(), feats.end(), std::int64_t{0});
      const auto take = std::min<std::int64_t>(mtry, x.cols);
      for (std::int64_t i = 0; i < take; ++i) {
        std::swap(feats[static_cast<std::size_t>(i)],
                  feats[static_cast<std::size_t>(i + rng.below(x.cols - i))]);
      }
      feats.resize(static_cast<std::size_t>(take));
      const double parent = gini(static_cast<double>(n), static_cast<double>(n1));
      split = best_split(feats, [&](std::int64_t f) {
        return eval_gini_feature(x, y, rows, f, parent, n1, min_samples_leaf);
      });
    }
    if (!split.found) {
      TreeNode leaf;
      leaf.value = freq;
      nodes.push_back(leaf);
      return static_cast<std::int64_t>(nodes.size()) - 1;
    }

    std::vector<std::int64_t> lrows;
    std::vector<std::int64_t> rrows;
    for (std::int64_t r : rows) {
      (x(r, split.feature) <= split.threshold ? lrows : rrows).push_back(r);
    }
    if (lrows.empty() || rrows.empty()) {
      TreeNode leaf;
      leaf.value = freq;
      nodes.push_back(leaf);
      return static_cast<std::int64_t>(nodes.size()) - 1;
    }
    TreeNode node;
    node.feature = split.feature;
    node.threshold = split.threshold;
    nodes.push_back(node);
    const auto idx = static_cast<std::int64_t>(nodes.size()) - 1;
    const auto li = build(lrows, depth + 1);
    const auto ri = build(rrows, depth + 1);
    nodes[static_cast<std::size_t>(idx)].left = li;
    nodes[static_cast<std::size_t>(idx)].right = ri;
    return idx;
  }
};

struct NewtonBuilder {
  const Matrix& x;
  const std::vector<double>& g;
  const std::vector<double>& h;
  int max_depth;
  double lambda;
  std::vector<TreeNode>& nodes;

  std::int64_t build(const std::vector<std::int64_t>& rows, int depth) {
    double gsum = 0.0;
    double hsum = 0.0;
    for (std::int64_t r : rows) {
      gsum += g[static_cast<std::size_t>(r)];
      hsum += h[static_cast<std::size_t>(r)];
    }

    SplitChoice split;
    if (depth < max_depth && rows.size() >= 2) {
      std::vector<std::int64_t> feats(static_cast<std::size_t>(x.cols));
      std::iota(feats.begin(), feats.end(), std::int64_t{0});
      split = best_split(feats, [&](std::int64_t f) {
        return eval_newton_feature(x, g, h, rows, f, lambda, gsum, hsum);
      });
    }
    if (!split.found) {
      TreeNode leaf;
      leaf.value = -gsum / (hsum + lambda);
      nodes.push_back(leaf);
      return static_cast<std::int64_t>(nodes.size()) - 1;
    }

    std::vector<std::int64_t> lrows;
    std::vector<std::int64_t> rrows;
    for (std::int64_t r : rows) {
      (x(r, split.feature) <= split.threshold ? lrows : rrows).push_back(r);
    }
    if (lrows.empty() || rrows.empty()) {
      TreeNode leaf;
      leaf.value = -gsum / (hsum + lambda);
      nodes.push_back(leaf);
      return static_cast<std::int64_t>(nodes.size()) - 1;
    }
    TreeNode node;
    node.feature = split.feature;
    node.threshold = split.threshold;
    nodes.push_back(node);
    const auto idx = static_cast<std::int64_t>(nodes.size()) - 1;
    const auto li = build(lrows, depth + 1);
    const auto ri = build(rrows, depth + 1);
    nodes[static_cast<std::size_t>(idx)].left = li;
    nodes[static_cast<std::size_t>(idx)].right = ri;
    return idx;
  }
};

void check_two_classes(const std::vector<std::uint8_t>& y) {
  bool has0 = false;
  bool has1 = false;
  for (auto v : y) (v ? has1 : has0) = true;
  if (!has0 || !has1) fail(Err::SingleClassTraining, "training labels contain a single class");
}

std::vector<std::int64_t> all_rows(std::int64_t n) {
  std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), std::int64_t{0});
  return rows;
}

nlohmann::json tree_to_json(const DecisionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : t.nodes) {
    nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}, {"v", n.value}});
  }
  return nodes;
}

DecisionTree tree_from_json(const nlohmann::json& j) {
  DecisionTree t;
  for (const auto& n : j) {
    TreeNode node;
    node.feature = n.at("f").get<std::int64_t>();
    node.threshold = n.at("t").get<double>();
    node.left = n.at("l").get<std::int64_t>();
    node.right = n.at("r").get<std::int64_t>();
    node.value = n.at("v").get<double>();
    t.nodes.push_back(node);
  }
  return t;
}

}  // namespace

double DecisionTree::predict_row(const double* row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    i = static_cast<std::size_t>(row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
  }
  return nodes[i].value;
}

std::vector<double> DecisionTree::predict(const Matrix& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  for (std::int64_t i = 0; i < x.rows; ++i) out[static_cast<std::size_t>(i)] = predict_row(x.row(i));
  return out;
}

DecisionTree fit_tree_gini(const Matrix& x, const std::vector<std::uint8_t>& y,
                           const std::vector<std::int64_t>& rows, int max_depth, int min_samples_leaf, int mtry,
                           Rng& rng) {
  if (rows.empty()) fail(Err::EmptySplit, "cannot fit a tree on zero samples");
  if (max_depth < 1 || min_samples_leaf < 1 || mtry < 1) {
    fail(Err::InvalidArgument, "tree depth, leaf size, and mtry must be positive");
  }
  DecisionTree t;
  GiniBuilder b{x, y, max_depth, min_samples_leaf, mtry, rng, t.nodes};
  b.build(rows, 0);
  return t;
}

DecisionTree fit_tree_newton(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                             const std::vector<std::int64_t>& rows, int max_depth, double lambda) {
  if (rows.empty()) fail(Err::EmptySplit, "cannot fit a tree on zero samples");
  if (max_depth < 1 || lambda < 0.0) fail(Err::InvalidArgument, "need max_depth >= 1 and lambda >= 0");
  DecisionTree t;
  NewtonBuilder b{x, g, h, max_depth, lambda, t.nodes};
  b.build(rows, 0);
  return t;
}

ForestModel fit_forest(const Matrix& x, const std::vector<std::uint8_t>& y, const ForestHyper& hyper) {
  if (x.rows != static_cast<std::int64_t>(y.size())) fail(Err::LengthMismatch, "rows and labels differ");
  if (hyper.n_estimators < 1 || hyper.max_depth < 1 || hyper.min_samples_leaf < 1) {
    fail(Err::InvalidArgument, "forest needs n_estimators, max_depth, min_samples_leaf >= 1");
  }
  check_two_classes(y);
  const int mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(x.cols)))));

  ForestModel m;
  m.hyper = hyper;
  m.trees.resize(static_cast<std::size_t>(hyper.n_estimators));
  // Each tree owns one seeded stream, so fitting order cannot matter.
  par::for_each_index(hyper.n_estimators, [&](std::int64_t t) {
    Rng rng(mix_seed(hyper.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::int64_t> rows(static_cast<std::size_t>(x.rows));
    for (auto& r : rows) r = rng.below(x.rows);
    m.trees[static_cast<std::size_t>(t)] =
        fit_tree_gini(x, y, rows, hyper.max_depth, hyper.min_samples_leaf, mtry, rng);
  });
  return m;
}

std::vector<double> predict_forest(const ForestModel& m, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  par::for_each_index(x.rows, [&](std::int64_t i) {
    double sum = 0.0;
    for (const DecisionTree& t : m.trees) sum += t.predict_row(x.row(i));
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(m.trees.size());
  });
  return out;
}

std::vector<double> predict_forest_hard(const ForestModel& m, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  par::for_each_index(x.rows, [&](std::int64_t i) {
    std::int64_t votes = 0;
    for (const DecisionTree& t : m.trees) votes += t.predict_row(x.row(i)) >= 0.5 ? 1 : 0;
    out[static_cast<std::size_t>(i)] = static_cast<double>(votes) / static_cast<double>(m.trees.size());
  });
  return out;
}

BoostModel fit_boost(const Matrix& x, const std::vector<std::uint8_t>& y, const BoostHyper& hyper) {
  if (x.rows != static_cast<std::int64_t>(y.size())) fail(Err::LengthMismatch, "rows and labels differ");
  if (hyper.n_estimators < 0 || hyper.max_depth < 1 || !(hyper.learning_rate > 0.0) || hyper.lambda < 0.0) {
    fail(Err::InvalidArgument, "bad boosting hyperparameters");
  }
  check_two_classes(y);

  const auto n = x.rows;
  double pbar = 0.0;
  for (auto v : y) pbar += v;
  pbar /= static_cast<double>(n);

  BoostModel m;
  m.hyper = hyper;
  m.base_score = std::log(pbar / (1.0 - pbar));

  std::vector<double> score(static_cast<std::size_t>(n), m.base_score);
  std::vector<double> g(static_cast<std::size_t>(n));
  std::vector<double> h(static_cast<std::size_t>(n));
  const auto rows = all_rows(n);
  for (int round = 0; round < hyper.n_estimators; ++round) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double p = sigmoid(score[static_cast<std::size_t>(i)]);
      g[static_cast<std::size_t>(i)] = p - static_cast<double>(y[static_cast<std::size_t>(i)]);
      h[static_cast<std::size_t>(i)] = p * (1.0 - p);
    }
    DecisionTree tree = fit_tree_newton(x, g, h, rows, hyper.max_depth, hyper.lambda);
    for (std::int64_t i = 0; i < n; ++i) {
      score[static_cast<std::size_t>(i)] += hyper.learning_rate * tree.predict_row(x.row(i));
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

std::vector<double> predict_boost(const BoostModel& m, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  par::for_each_index(x.rows, [&](std::int64_t i) {
    double s = m.base_score;
    for (const DecisionTree& t : m.trees) s += m.hyper.learning_rate * t.predict_row(x.row(i));
    out[static_cast<std::size_t>(i)] = sigmoid(s);
  });
  return out;
}

void save_forest(const ForestModel& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "forest-model";
  j["version"] = 1;
  j["hyper"] = {{"n_estimators", m.hyper.n_estimators},
                {"max_depth", m.hyper.max_depth},
                {"min_samples_leaf", m.hyper.min_samples_leaf},
                {"seed", m.hyper.seed}};
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& t : m.trees) trees.push_back(tree_to_json(t));
  j["trees"] = std::move(trees);
  write_file(path, j.dump());
}

ForestModel load_forest(const std::string& path) {
  const nlohmann::json j = nlohmann::json::parse(read_file(path));
  if (j.value("format", "") != "forest-model") fail(Err::Io, "not a forest model: " + path);
  ForestModel m;
  m.hyper.n_estimators = j.at("hyper").at("n_estimators").get<int>();
  m.hyper.max_depth = j.at("hyper").at("max_depth").get<int>();
  m.hyper.min_samples_leaf = j.at("hyper").at("min_samples_leaf").get<int>();
  m.hyper.seed = j.at("hyper").at("seed").get<std::uint64_t>();
  for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
  return m;
}

void save_boost(const BoostModel& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "boost-model";
  j["version"] = 1;
  j["hyper"] = {{"n_estimators", m.hyper.n_estimators},
                {"learning_rate", m.hyper.learning_rate},
                {"max_depth", m.hyper.max_depth},
                {"lambda", m.hyper.lambda},
                {"seed", m.hyper.seed}};
  j["base_score"] = m.base_score;
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& t : m.trees) trees.push_back(tree_to_json(t));
  j["trees"] = std::move(trees);
  write_file(path, j.dump());
}

BoostModel load_boost(const std::string& path) {
  const nlohmann::json j = nlohmann::json::parse(read_file(path));
  if (j.value("format", "") != "boost-model") fail(Err::Io, "not a boosting model: " + path);
  BoostModel m;
  m.hyper.n_estimators = j.at("hyper").at("n_estimators").get<int>();
  m.hyper.learning_rate = j.at("hyper").at("learning_rate").get<double>();
  m.hyper.max_depth = j.at("hyper").at("max_depth").get<int>();
  m.hyper.lambda = j.at("hyper").at("lambda").get<double>();
  m.hyper.seed = j.at("hyper").at("seed").get<std::uint64_t>();
  m.base_score = j.at("base_score").get<double>();
  for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
  return m;
}

}  // namespace crashwatch
