#include "crashwatch/indicators.hpp"

#include <algorithm>
#include <cmath>

namespace crashwatch {

const char* indicator_name(IndicatorKind k) {
  switch (k) {
    case IndicatorKind::Raw: return "raw";
    case IndicatorKind::Return: return "return";
    case IndicatorKind::Ma: return "ma";
    case IndicatorKind::Ema: return "ema";
    case IndicatorKind::OpenCloseDiff: return "oc_diff";
    case IndicatorKind::Rsi: return "rsi";
    case IndicatorKind::Macd: return "macd";
    case IndicatorKind::MacdSignal: return "macd_signal";
    case IndicatorKind::MacdHist: return "macd_hist";
  }
  return "?";
}

IndicatorKind indicator_from_name(const std::string& name) {
  if (name == "raw") return IndicatorKind::Raw;
  if (name == "return") return IndicatorKind::Return;
  if (name == "ma") return IndicatorKind::Ma;
  if (name == "ema") return IndicatorKind::Ema;
  if (name == "oc_diff") return IndicatorKind::OpenCloseDiff;
  if (name == "rsi") return IndicatorKind::Rsi;
  if (name == "macd") return IndicatorKind::Macd;
  if (name == "macd_signal") return IndicatorKind::MacdSignal;
  if (name == "macd_hist") return IndicatorKind::MacdHist;
  fail(Err::InvalidArgument, "unknown indicator kind '" + name + "'");
}

void LagSet::validate() const {
  if (windows.empty()) fail(Err::InvalidArgument, "lag set is empty");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i] < 2) fail(Err::InvalidArgument, "lag windows must be >= 2");
    if (i > 0 && windows[i] <= windows[i - 1]) fail(Err::InvalidArgument, "lag windows must be strictly increasing");
  }
}

Series simple_return(const Series& close) {
  if (close.size() < 2) fail(Err::InsufficientData, "simple_return needs at least 2 observations");
  for (const double c : close) {
    if (!is_missing(c) && c <= 0.0) fail(Err::NonPositivePrice, "simple_return requires positive prices");
  }
  Series r(close.size(), kMissing);
  for (std::size_t t = 1; t < close.size(); ++t) {
    if (is_missing(close[t]) || is_missing(close[t - 1])) continue;
    r[t] = (close[t] - close[t - 1]) / close[t - 1];
  }
  return r;
}

Series moving_average(const Series& x, int w) {
  if (w < 1) fail(Err::InvalidArgument, "moving_average window must be >= 1");
  Series y(x.size(), kMissing);
  for (std::size_t t = static_cast<std::size_t>(w) - 1; t < x.size(); ++t) {
    double sum = 0.0;
    bool ok = true;
    for (std::size_t j = t + 1 - static_cast<std::size_t>(w); j <= t; ++j) {
      if (is_missing(x[j])) {
        ok = false;
        break;
      }
      sum += x[j];
    }
    if (ok) y[t] = sum / static_cast<double>(w);
  }
  return y;
}

Series exponential_moving_average(const Series& x, int w) {
  if (w < 1) fail(Err::InvalidArgument, "exponential_moving_average window must be >= 1");
  const double alpha = 2.0 / (static_cast<double>(w) + 1.0);
  Series y(x.size(), kMissing);
  bool seeded = false;
  double prev = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (is_missing(x[t])) continue;
    prev = seeded ? alpha * x[t] + (1.0 - alpha) * prev : x[t];
    seeded = true;
    y[t] = prev;
  }
  return y;
}

Series rsi(const Series& close, int period) {
  if (period < 1) fail(Err::InvalidArgument, "rsi period must be >= 1");
  if (close.size() <= static_cast<std::size_t>(period)) {
    fail(Err::InsufficientData, "rsi needs more observations than its period");
  }
  Series out(close.size(), kMissing);
  const std::size_t p = static_cast<std::size_t>(period);

  double avg_gain = 0.0, avg_loss = 0.0;
  for (std::size_t t = 1; t <= p; ++t) {
    const double diff = close[t] - close[t - 1];
    if (diff > 0) avg_gain += diff;
    else avg_loss -= diff;
  }
  avg_gain /= static_cast<double>(period);
  avg_loss /= static_cast<double>(period);

  const auto value = [](double gain, double loss) {
    if (loss == 0.0 && gain == 0.0) return 50.0;  // flat window
    if (loss == 0.0) return 100.0;
    return 100.0 - 100.0 / (1.0 + gain / loss);
  };
  out[p] = value(avg_gain, avg_loss);

  for (std::size_t t = p + 1; t < close.size(); ++t) {
    const double diff = close[t] - close[t - 1];
    avg_gain = (avg_gain * (period - 1) + std::max(diff, 0.0)) / static_cast<double>(period);
    avg_loss = (avg_loss * (period - 1) + std::max(-diff, 0.0)) / static_cast<double>(period);
    out[t] = value(avg_gain, avg_loss);
  }
  return out;
}

MacdResult macd(const Series& close, int fast, int slow, int signal) {
  if (close.size() < static_cast<std::size_t>(slow)) {
    fail(Err::InsufficientData, "macd needs at least `slow` observations");
  }
  const Series ema_fast = exponential_moving_average(close, fast);
  const Series ema_slow = exponential_moving_average(close, slow);
  MacdResult r;
  r.macd.resize(close.size(), kMissing);
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!is_missing(ema_fast[t]) && !is_missing(ema_slow[t])) r.macd[t] = ema_fast[t] - ema_slow[t];
  }
  r.signal = exponential_moving_average(r.macd, signal);
  r.histogram.resize(close.size(), kMissing);
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!is_missing(r.macd[t]) && !is_missing(r.signal[t])) r.histogram[t] = r.macd[t] - r.signal[t];
  }
  return r;
}

Series open_close_diff(const Series& open, const Series& close) {
  if (open.size() != close.size()) fail(Err::LengthMismatch, "open/close length mismatch");
  Series d(open.size(), kMissing);
  for (std::size_t t = 0; t < open.size(); ++t) {
    if (!is_missing(open[t]) && !is_missing(close[t])) d[t] = close[t] - open[t];
  }
  return d;
}

namespace {

// Runs `op` over the observed subsequence of `x` and scatters results back to
// the observed positions, which matches computing on the instrument's native
// calendar before alignment.
template <class Op>
Series on_observed(const Series& x, Op&& op) {
  std::vector<std::size_t> pos;
  Series dense;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!is_missing(x[i])) {
      pos.push_back(i);
      dense.push_back(x[i]);
    }
  }
  const Series computed = op(dense);
  Series out(x.size(), kMissing);
  for (std::size_t i = 0; i < pos.size(); ++i) out[pos[i]] = computed[i];
  return out;
}

}  // namespace

std::vector<IndicatorSpec> full_instrument_specs(const std::string& instrument) {
  std::vector<IndicatorSpec> specs;
  specs.push_back({IndicatorKind::Raw, instrument, std::nullopt, "adj_close"});
  specs.push_back({IndicatorKind::Return, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::Ma, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::Ema, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::OpenCloseDiff, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::Rsi, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::Macd, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::MacdSignal, instrument, std::nullopt, ""});
  specs.push_back({IndicatorKind::MacdHist, instrument, std::nullopt, ""});
  return specs;
}

FeaturePanel build_catalog(const FeaturePanel& panel, const std::vector<IndicatorSpec>& specs, const LagSet& lags,
                           const std::string& price_field) {
  lags.validate();
  FeaturePanel out;
  out.dates = panel.dates;

  for (const auto& spec : specs) {
    const std::string prefix = spec.instrument;
    const auto price_col = [&]() -> const Series& { return panel.col(prefix + "." + price_field); };

    switch (spec.kind) {
      case IndicatorKind::Raw: {
        const std::string field = spec.field.empty() ? price_field : spec.field;
        out.add_column(prefix + "." + field, panel.col(prefix + "." + field));
        break;
      }
      case IndicatorKind::Return:
        out.add_column(prefix + ".return", on_observed(price_col(), [](const Series& s) { return simple_return(s); }));
        break;
      case IndicatorKind::Ma:
      case IndicatorKind::Ema: {
        std::vector<int> windows = spec.window ? std::vector<int>{*spec.window} : lags.windows;
        for (const int w : windows) {
          const Series col = on_observed(price_col(), [&](const Series& s) {
            return spec.kind == IndicatorKind::Ma ? moving_average(s, w) : exponential_moving_average(s, w);
          });
          out.add_column(prefix + (spec.kind == IndicatorKind::Ma ? ".ma." : ".ema.") + std::to_string(w), col);
        }
        break;
      }
      case IndicatorKind::OpenCloseDiff:
        out.add_column(prefix + ".oc_diff", open_close_diff(panel.col(prefix + ".open"), panel.col(prefix + ".close")));
        break;
      case IndicatorKind::Rsi: {
        const int period = spec.window.value_or(14);
        out.add_column(prefix + ".rsi", on_observed(price_col(), [&](const Series& s) { return rsi(s, period); }));
        break;
      }
      case IndicatorKind::Macd:
      case IndicatorKind::MacdSignal:
      case IndicatorKind::MacdHist: {
        const Series col = on_observed(price_col(), [&](const Series& s) {
          const MacdResult r = macd(s);
          if (spec.kind == IndicatorKind::Macd) return r.macd;
          if (spec.kind == IndicatorKind::MacdSignal) return r.signal;
          return r.histogram;
        });
        out.add_column(prefix + "." + indicator_name(spec.kind), col);
        break;
      }
    }
  }
  return out;
}

}  // namespace crashwatch
