#include "crashwatch/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace crashwatch {

static void check_lengths(const std::vector<std::uint8_t>& y, const std::vector<double>& p) {
  if (y.size() != p.size()) {
    fail(Err::LengthMismatch,
         "labels and scores differ in length: " + std::to_string(y.size()) + " vs " + std::to_string(p.size()));
  }
}

Confusion confusion_at(const std::vector<std::uint8_t>& y, const std::vector<double>& p, double threshold) {
  check_lengths(y, p);
  Confusion c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = p[i] >= threshold;
    if (y[i]) {
      (pred ? c.tp : c.fn)++;
    } else {
      (pred ? c.fp : c.tn)++;
    }
  }
  return c;
}

std::optional<double> inverse_false_alarm_rate(const Confusion& c) {
  const double denom = static_cast<double>(c.fp + c.tn);
  if (denom == 0.0) return std::nullopt;
  return 1.0 - static_cast<double>(c.fp) / denom;
}

std::optional<double> hit_rate(const Confusion& c) {
  const double denom = static_cast<double>(c.tp + c.fn);
  if (denom == 0.0) return std::nullopt;
  return static_cast<double>(c.tp) / denom;
}

std::optional<double> balanced_accuracy(const Confusion& c) {
  const auto tpr = hit_rate(c);
  const auto tnr = inverse_false_alarm_rate(c);
  if (!tpr || !tnr) return std::nullopt;
  return 0.5 * (*tpr + *tnr);
}

std::vector<PrPoint> pr_curve(const std::vector<std::uint8_t>& y, const std::vector<double>& p) {
  check_lengths(y, p);
  const std::int64_t n_pos = std::accumulate(y.begin(), y.end(), std::int64_t{0});
  if (n_pos == 0) fail(Err::NoPositives, "precision-recall curve needs at least one positive label");

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  std::vector<PrPoint> curve;
  std::int64_t tp = 0;
  std::int64_t predicted = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double score = p[order[i]];
    while (i < order.size() && p[order[i]] == score) {
      tp += y[order[i]] ? 1 : 0;
      ++predicted;
      ++i;
    }
    PrPoint pt;
    pt.threshold = score;
    pt.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    pt.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    curve.push_back(pt);
  }
  return curve;
}

double auc_prc(const std::vector<std::uint8_t>& y, const std::vector<double>& p) {
  const auto curve = pr_curve(y, p);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const PrPoint& pt : curve) {
    ap += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
  }
  return ap;
}

MetricsReport evaluate_predictions(const std::vector<std::uint8_t>& y, const std::vector<double>& p,
                                   double threshold) {
  MetricsReport m;
  m.threshold = threshold;
  m.counts = confusion_at(y, p, threshold);
  m.ifar = inverse_false_alarm_rate(m.counts);
  m.hit_rate = hit_rate(m.counts);
  m.bal_acc = balanced_accuracy(m.counts);
  if (m.counts.tp + m.counts.fn > 0) m.auc_prc = auc_prc(y, p);
  return m;
}

static void append_opt(std::ostringstream& os, const std::optional<double>& v) {
  if (v) {
    os << fmt_full(*v);
  } else {
    os << "NOT_DEFINED";
  }
}

std::string metrics_csv_header() { return "ifar,hit_rate,bal_acc,auc_prc,tp,fp,fn,tn,threshold"; }

std::string metrics_csv_row(const MetricsReport& m) {
  std::ostringstream os;
  append_opt(os, m.ifar);
  os << ',';
  append_opt(os, m.hit_rate);
  os << ',';
  append_opt(os, m.bal_acc);
  os << ',';
  append_opt(os, m.auc_prc);
  os << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn << ',' << m.counts.tn << ','
     << fmt_full(m.threshold);
  return os.str();
}

std::string metrics_json(const MetricsReport& m) {
  nlohmann::json j;
  auto set = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  set("ifar", m.ifar);
  set("hit_rate", m.hit_rate);
  set("bal_acc", m.bal_acc);
  set("auc_prc", m.auc_prc);
  j["tp"] = m.counts.tp;
  j["fp"] = m.counts.fp;
  j["fn"] = m.counts.fn;
  j["tn"] = m.counts.tn;
  j["threshold"] = m.threshold;
  return j.dump();
}

}  // namespace crashwatch
