#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

// One daily bar. Any price/volume field may be missing (NaN).
struct OhlcvBar {
  Date date;
  double open = kMissing;
  double high = kMissing;
  double low = kMissing;
  double close = kMissing;
  double adj_close = kMissing;
  double volume = kMissing;
};

struct PriceSeries {
  std::string instrument_id;
  std::vector<OhlcvBar> bars;  // strictly increasing dates
};

// Date-indexed named-column panel. Columns are parallel to `dates`.
struct FeaturePanel {
  std::vector<Date> dates;
  std::vector<std::string> names;
  std::vector<Series> cols;

  std::int64_t n_rows() const { return static_cast<std::int64_t>(dates.size()); }
  std::int64_t n_cols() const { return static_cast<std::int64_t>(cols.size()); }
  std::optional<std::size_t> find(const std::string& name) const;
  const Series& col(const std::string& name) const;  // Err::UnknownSourceColumn
  void add_column(std::string name, Series values);  // enforces length and uniqueness
};

// Yahoo-style OHLCV export. Header must be exactly
// `Date,Open,High,Low,Close,Adj Close,Volume`; `null` or empty numeric fields
// parse as missing; rows are sorted by date.
PriceSeries parse_csv(const std::string& raw, const std::string& instrument_id);
PriceSeries load_ohlcv_csv(const std::string& path, const std::string& instrument_id);

// Left join of every series onto the anchor's trading calendar. Emits one
// column per instrument per raw field, named `<id>.<field>` with fields
// open, high, low, close, adj_close, volume.
FeaturePanel align_calendars(const std::vector<PriceSeries>& series_set, const std::string& anchor_id);

// Drops columns whose missing fraction exceeds max_missing_frac.
FeaturePanel drop_sparse_columns(const FeaturePanel& panel, double max_missing_frac = 0.20);

// Drops leading rows that precede some column's first observed value, so the
// indicator warm-up prefix never reaches the imputer.
FeaturePanel trim_warmup(const FeaturePanel& panel);

// Fills every missing cell with the mean of the column over the k nearest
// donor rows. Distances are Euclidean over z-scored mutually observed
// columns; rows sharing no observed column are infinitely distant; ties break
// toward the earlier date. Observed cells are never modified.
FeaturePanel knn_impute(const FeaturePanel& panel, int k = 5);

// Panel round-trip for chaining CLI stages. Missing cells serialize as empty
// fields; values use round-trip-exact decimals.
void save_panel_csv(const FeaturePanel& panel, const std::string& path);
FeaturePanel load_panel_csv(const std::string& path);

}  // namespace crashwatch
