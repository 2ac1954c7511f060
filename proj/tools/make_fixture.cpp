#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crashwatch/core.hpp"

using namespace crashwatch;

// Writes a small deterministic three-instrument OHLCV corpus for tests and the
// example config. Non-anchor instruments skip some dates (their own holidays)
// and null out occasional cells so alignment and imputation have work to do.

namespace {

std::vector<Date> weekday_calendar(Date start, int n) {
  std::vector<Date> out;
  Date d = start;
  while (static_cast<int>(out.size()) < n) {
    out.push_back(d);
    d = d.next_weekday();
  }
  return out;
}

void write_instrument(const std::string& dir, const std::string& id, const std::vector<Date>& calendar,
                      double base_price, double drop_prob, double null_prob, std::uint64_t seed) {
  Rng rng(mix_seed(seed, hash_str(id)));
  std::string csv = "Date,Open,High,Low,Close,Adj Close,Volume\n";
  double logp = std::log(base_price);
  double prev_close = base_price;
  for (const Date& d : calendar) {
    logp += 0.012 * rng.normal();
    const double close = std::exp(logp);
    const double open = prev_close * std::exp(0.004 * rng.normal());
    const double spread = 1.0 + 0.002 + 0.006 * rng.uniform();
    const double high = std::max(open, close) * spread;
    const double low = std::min(open, close) / spread;
    const double volume = 1e6 * std::exp(0.3 * rng.normal());
    prev_close = close;

    const bool dropped = rng.uniform() < drop_prob;
    const bool null_vol = rng.uniform() < null_prob;
    const bool null_hl = rng.uniform() < null_prob;
    if (dropped) continue;

    csv += d.iso() + ',' + fmt_fixed(open, 6) + ',';
    csv += null_hl ? "null" : fmt_fixed(high, 6);
    csv += ',';
    csv += null_hl ? "null" : fmt_fixed(low, 6);
    csv += ',' + fmt_fixed(close, 6) + ',' + fmt_fixed(close, 6) + ',';
    csv += null_vol ? "null" : fmt_fixed(volume, 0);
    csv += '\n';
  }
  const std::string path = dir + "/" + id + ".csv";
  write_file(path, csv);
  std::printf("wrote %s\n", path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = "data/fixture";
  int n_dates = 720;
  std::uint64_t seed = 20100104;

  CLI::App app{"generate the committed OHLCV fixture"};
  app.add_option("--out", dir, "output directory");
  app.add_option("--dates", n_dates, "anchor calendar length");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  const auto calendar = weekday_calendar(Date::from_iso("2010-01-04"), n_dates);
  write_instrument(dir, "idx", calendar, 1500.0, 0.0, 0.0, seed);
  write_instrument(dir, "glob1", calendar, 95.0, 0.03, 0.01, seed);
  write_instrument(dir, "glob2", calendar, 11000.0, 0.02, 0.015, seed);
  return 0;
}
