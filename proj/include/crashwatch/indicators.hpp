#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crashwatch/market_data.hpp"

namespace crashwatch {

enum class IndicatorKind {
  Raw,           // copy of a raw field column
  Return,        // one-day simple return
  Ma,            // simple moving average (expands over the lag set)
  Ema,           // exponential moving average (expands over the lag set)
  OpenCloseDiff, // close - open
  Rsi,           // Wilder RSI
  Macd,
  MacdSignal,
  MacdHist,
};

const char* indicator_name(IndicatorKind k);
IndicatorKind indicator_from_name(const std::string& name);  // Err::InvalidArgument

struct IndicatorSpec {
  IndicatorKind kind;
  std::string instrument;           // column prefix, e.g. "jkse"
  std::optional<int> window;        // fixed window; Ma/Ema without one expand over the lag set
  std::string field;                // Raw only: which raw field to copy
};

struct LagSet {
  std::vector<int> windows{5, 10, 15, 20, 22, 50, 200};
  void validate() const;  // strictly increasing, all >= 2
};

// r_t = (c_t - c_{t-1}) / c_{t-1}; first element missing.
Series simple_return(const Series& close);

// y_t = mean(x_{t-w+1..t}); first w-1 entries missing.
Series moving_average(const Series& x, int w);

// alpha = 2/(w+1), seeded with the first observation.
Series exponential_moving_average(const Series& x, int w);

// Wilder-smoothed RSI in [0, 100]; first `period` entries missing.
Series rsi(const Series& close, int period = 14);

struct MacdResult {
  Series macd;
  Series signal;
  Series histogram;
};
MacdResult macd(const Series& close, int fast = 12, int slow = 26, int signal = 9);

Series open_close_diff(const Series& open, const Series& close);

// Expands specs into named columns `instrument.indicator[.window]`, computed
// on each source column's observed subsequence so calendar gaps neither break
// windows nor leak placeholder values. Gap positions stay missing; warm-up
// cells stay missing for downstream trimming.
FeaturePanel build_catalog(const FeaturePanel& panel, const std::vector<IndicatorSpec>& specs, const LagSet& lags,
                           const std::string& price_field = "adj_close");

// Full indicator set for one instrument: raw price level, return, MA and EMA
// over the lag set, open-close spread, RSI, and the MACD triple.
std::vector<IndicatorSpec> full_instrument_specs(const std::string& instrument);

}  // namespace crashwatch
