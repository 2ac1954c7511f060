#include "crashwatch/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "crashwatch/parallel.hpp"

namespace crashwatch {

namespace {

constexpr const char* kOhlcvHeader = "Date,Open,High,Low,Close,Adj Close,Volume";
const char* kFieldNames[6] = {"open", "high", "low", "close", "adj_close", "volume"};

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_null_token(const std::string& t) {
  if (t.empty()) return true;
  if (t.size() != 4) return false;
  return (t[0] == 'n' || t[0] == 'N') && (t[1] == 'u' || t[1] == 'U') && (t[2] == 'l' || t[2] == 'L') &&
         (t[3] == 'l' || t[3] == 'L');
}

// Unparseable numerics become missing rather than dropping the row.
double parse_field(const std::string& raw) {
  const std::string t = trim(raw);
  if (is_null_token(t)) return kMissing;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return kMissing;
  if (!std::isfinite(v)) return kMissing;
  return v;
}

std::vector<std::string> split_lines(const std::string& raw) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < raw.size()) {
    std::size_t pos = raw.find('\n', start);
    if (pos == std::string::npos) pos = raw.size();
    lines.push_back(strip_cr(raw.substr(start, pos - start)));
    start = pos + 1;
  }
  return lines;
}

}  // namespace

std::optional<std::size_t> FeaturePanel::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

const Series& FeaturePanel::col(const std::string& name) const {
  const auto idx = find(name);
  if (!idx) fail(Err::UnknownSourceColumn, "no column named '" + name + "'");
  return cols[*idx];
}

void FeaturePanel::add_column(std::string name, Series values) {
  if (values.size() != dates.size()) fail(Err::LengthMismatch, "column '" + name + "' length != panel dates");
  if (find(name)) fail(Err::InvalidArgument, "duplicate column name '" + name + "'");
  names.push_back(std::move(name));
  cols.push_back(std::move(values));
}

PriceSeries parse_csv(const std::string& raw, const std::string& instrument_id) {
  std::string body = raw;
  if (body.size() >= 3 && static_cast<unsigned char>(body[0]) == 0xEF && static_cast<unsigned char>(body[1]) == 0xBB &&
      static_cast<unsigned char>(body[2]) == 0xBF) {
    body.erase(0, 3);  // UTF-8 BOM
  }
  const auto lines = split_lines(body);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) fail(Err::EmptyFile, "no content in CSV for '" + instrument_id + "'");
  if (lines[first] != kOhlcvHeader) {
    fail(Err::MalformedHeader, "expected '" + std::string(kOhlcvHeader) + "', got '" + lines[first] + "'");
  }

  PriceSeries series;
  series.instrument_id = instrument_id;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != 7) {
      fail(Err::MalformedRow, instrument_id + " line " + std::to_string(i + 1) + ": expected 7 fields, got " +
                                  std::to_string(fields.size()));
    }
    OhlcvBar bar;
    bar.date = Date::from_iso(trim(fields[0]));
    bar.open = parse_field(fields[1]);
    bar.high = parse_field(fields[2]);
    bar.low = parse_field(fields[3]);
    bar.close = parse_field(fields[4]);
    bar.adj_close = parse_field(fields[5]);
    bar.volume = parse_field(fields[6]);
    if (!is_missing(bar.volume) && bar.volume < 0) bar.volume = kMissing;
    series.bars.push_back(bar);
  }
  if (series.bars.empty()) fail(Err::EmptyFile, "no data rows in CSV for '" + instrument_id + "'");

  std::stable_sort(series.bars.begin(), series.bars.end(),
                   [](const OhlcvBar& a, const OhlcvBar& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < series.bars.size(); ++i) {
    if (series.bars[i].date == series.bars[i - 1].date) {
      fail(Err::DuplicateDate, instrument_id + ": duplicate date " + series.bars[i].date.iso());
    }
  }
  return series;
}

PriceSeries load_ohlcv_csv(const std::string& path, const std::string& instrument_id) {
  return parse_csv(read_file(path), instrument_id);
}

FeaturePanel align_calendars(const std::vector<PriceSeries>& series_set, const std::string& anchor_id) {
  const PriceSeries* anchor = nullptr;
  for (const auto& s : series_set) {
    if (s.instrument_id == anchor_id) anchor = &s;
  }
  if (!anchor) fail(Err::AnchorNotFound, "anchor instrument '" + anchor_id + "' not in series set");

  FeaturePanel panel;
  panel.dates.reserve(anchor->bars.size());
  for (const auto& bar : anchor->bars) panel.dates.push_back(bar.date);

  const std::size_t n = panel.dates.size();
  for (const auto& s : series_set) {
    Series fields[6];
    for (auto& f : fields) f.assign(n, kMissing);
    // Both calendars are sorted, so a single merge pass joins on exact dates.
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      while (j < s.bars.size() && s.bars[j].date < panel.dates[i]) ++j;
      if (j < s.bars.size() && s.bars[j].date == panel.dates[i]) {
        const OhlcvBar& b = s.bars[j];
        fields[0][i] = b.open;
        fields[1][i] = b.high;
        fields[2][i] = b.low;
        fields[3][i] = b.close;
        fields[4][i] = b.adj_close;
        fields[5][i] = b.volume;
      }
    }
    for (int f = 0; f < 6; ++f) panel.add_column(s.instrument_id + "." + kFieldNames[f], std::move(fields[f]));
  }
  return panel;
}

FeaturePanel drop_sparse_columns(const FeaturePanel& panel, double max_missing_frac) {
  if (max_missing_frac < 0.0 || max_missing_frac > 1.0) {
    fail(Err::InvalidArgument, "max_missing_frac must be in [0, 1]");
  }
  FeaturePanel out;
  out.dates = panel.dates;
  const double n = static_cast<double>(panel.n_rows());
  for (std::size_t c = 0; c < panel.cols.size(); ++c) {
    std::int64_t miss = 0;
    for (const double v : panel.cols[c]) miss += is_missing(v) ? 1 : 0;
    const double frac = n > 0 ? static_cast<double>(miss) / n : 0.0;
    if (frac <= max_missing_frac) out.add_column(panel.names[c], panel.cols[c]);
  }
  return out;
}

FeaturePanel trim_warmup(const FeaturePanel& panel) {
  std::int64_t boundary = 0;
  for (std::size_t c = 0; c < panel.cols.size(); ++c) {
    std::int64_t first = -1;
    for (std::int64_t r = 0; r < panel.n_rows(); ++r) {
      if (!is_missing(panel.cols[c][static_cast<std::size_t>(r)])) {
        first = r;
        break;
      }
    }
    if (first < 0) fail(Err::AllMissingColumn, "column '" + panel.names[c] + "' has no observed values");
    boundary = std::max(boundary, first);
  }
  FeaturePanel out;
  out.dates.assign(panel.dates.begin() + boundary, panel.dates.end());
  for (std::size_t c = 0; c < panel.cols.size(); ++c) {
    out.add_column(panel.names[c],
                   Series(panel.cols[c].begin() + boundary, panel.cols[c].end()));
  }
  return out;
}

FeaturePanel knn_impute(const FeaturePanel& panel, int k) {
  if (k < 1) fail(Err::InvalidArgument, "knn_impute requires k >= 1");
  const std::int64_t n = panel.n_rows();
  const std::int64_t m = panel.n_cols();

  std::vector<double> col_mean(static_cast<std::size_t>(m), 0.0);
  std::vector<double> col_std(static_cast<std::size_t>(m), 0.0);
  for (std::int64_t c = 0; c < m; ++c) {
    double sum = 0.0, sum2 = 0.0;
    std::int64_t cnt = 0;
    for (const double v : panel.cols[static_cast<std::size_t>(c)]) {
      if (is_missing(v)) continue;
      sum += v;
      sum2 += v * v;
      ++cnt;
    }
    if (cnt == 0) fail(Err::AllMissingColumn, "column '" + panel.names[static_cast<std::size_t>(c)] + "' is all missing");
    const double mu = sum / static_cast<double>(cnt);
    const double var = std::max(0.0, sum2 / static_cast<double>(cnt) - mu * mu);
    col_mean[static_cast<std::size_t>(c)] = mu;
    col_std[static_cast<std::size_t>(c)] = std::sqrt(var);
  }

  // z-scored copy used only for distances; zero-variance columns contribute 0.
  Matrix z(n, m, kMissing);
  for (std::int64_t c = 0; c < m; ++c) {
    const Series& col = panel.cols[static_cast<std::size_t>(c)];
    for (std::int64_t r = 0; r < n; ++r) {
      const double v = col[static_cast<std::size_t>(r)];
      if (is_missing(v)) continue;
      z(r, c) = col_std[static_cast<std::size_t>(c)] > 0.0
                    ? (v - col_mean[static_cast<std::size_t>(c)]) / col_std[static_cast<std::size_t>(c)]
                    : 0.0;
    }
  }

  std::vector<std::int64_t> rows_with_missing;
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t c = 0; c < m; ++c) {
      if (is_missing(panel.cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)])) {
        rows_with_missing.push_back(r);
        break;
      }
    }
  }

  FeaturePanel out = panel;
  const double inf = std::numeric_limits<double>::infinity();

  // Each missing row is handled independently from the original observations,
  // so the result does not depend on cell order or the worker schedule.
  par::for_each_index(static_cast<std::int64_t>(rows_with_missing.size()), [&](std::int64_t qi) {
    const std::int64_t r = rows_with_missing[static_cast<std::size_t>(qi)];
    std::vector<std::pair<double, std::int64_t>> order;
    order.reserve(static_cast<std::size_t>(n - 1));
    for (std::int64_t d = 0; d < n; ++d) {
      if (d == r) continue;
      double s = 0.0;
      std::int64_t shared = 0;
      for (std::int64_t c = 0; c < m; ++c) {
        const double zr = z(r, c);
        const double zd = z(d, c);
        if (is_missing(zr) || is_missing(zd)) continue;
        const double diff = zr - zd;
        s += diff * diff;
        ++shared;
      }
      order.emplace_back(shared == 0 ? inf : s, d);
    }
    std::sort(order.begin(), order.end());  // (distance, earlier date) ascending

    for (std::int64_t c = 0; c < m; ++c) {
      if (!is_missing(panel.cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)])) continue;
      double sum = 0.0;
      int got = 0;
      for (const auto& [dist, d] : order) {
        if (dist == inf) break;
        const double v = panel.cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
        if (is_missing(v)) continue;
        sum += v;
        if (++got == k) break;
      }
      // No finite-distance donor observes this column: fall back to its mean.
      out.cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] =
          got > 0 ? sum / static_cast<double>(got) : col_mean[static_cast<std::size_t>(c)];
    }
  });
  return out;
}

void save_panel_csv(const FeaturePanel& panel, const std::string& path) {
  std::ostringstream out;
  out << "date";
  for (const auto& name : panel.names) {
    if (name.find(',') != std::string::npos) fail(Err::InvalidArgument, "column name contains comma: " + name);
    out << ',' << name;
  }
  out << '\n';
  for (std::int64_t r = 0; r < panel.n_rows(); ++r) {
    out << panel.dates[static_cast<std::size_t>(r)].iso();
    for (const auto& col : panel.cols) {
      const double v = col[static_cast<std::size_t>(r)];
      out << ',';
      if (!is_missing(v)) out << fmt_full(v);
    }
    out << '\n';
  }
  write_file(path, out.str());
}

FeaturePanel load_panel_csv(const std::string& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty() || trim(lines[0]).empty()) fail(Err::EmptyFile, "empty panel CSV '" + path + "'");
  const auto header = split_csv_line(lines[0]);
  if (header.empty() || header[0] != "date") fail(Err::MalformedHeader, "panel CSV must start with 'date' column");

  FeaturePanel panel;
  std::vector<Series> cols(header.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != header.size()) {
      fail(Err::MalformedRow, path + " line " + std::to_string(i + 1) + ": field count mismatch");
    }
    panel.dates.push_back(Date::from_iso(fields[0]));
    for (std::size_t c = 1; c < fields.size(); ++c) {
      cols[c - 1].push_back(parse_field(fields[c]));
    }
  }
  for (std::size_t c = 1; c < header.size(); ++c) panel.add_column(header[c], std::move(cols[c - 1]));
  return panel;
}

}  // namespace crashwatch
