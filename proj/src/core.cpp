#include "crashwatch/core.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace crashwatch {

const char* err_name(Err e) {
  switch (e) {
    case Err::MalformedHeader: return "MalformedHeader";
    case Err::MalformedRow: return "MalformedRow";
    case Err::DuplicateDate: return "DuplicateDate";
    case Err::EmptyFile: return "EmptyFile";
    case Err::AnchorNotFound: return "AnchorNotFound";
    case Err::AllMissingColumn: return "AllMissingColumn";
    case Err::NonPositivePrice: return "NonPositivePrice";
    case Err::UnknownSourceColumn: return "UnknownSourceColumn";
    case Err::InsufficientData: return "InsufficientData";
    case Err::AlphaOutOfRange: return "AlphaOutOfRange";
    case Err::DateMismatch: return "DateMismatch";
    case Err::ZeroVarianceFeature: return "ZeroVarianceFeature";
    case Err::MinorityTooSmall: return "MinorityTooSmall";
    case Err::NonFiniteActivation: return "NonFiniteActivation";
    case Err::EmptySplit: return "EmptySplit";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::NoPositives: return "NoPositives";
    case Err::SingleClassTraining: return "SingleClassTraining";
    case Err::RangeOutsideData: return "RangeOutsideData";
    case Err::InvalidArgument: return "InvalidArgument";
    case Err::Usage: return "Usage";
    case Err::Io: return "Io";
  }
  return "Unknown";
}

Date Date::from_iso(const std::string& s) {
  int y = 0, m = 0, d = 0;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c", &y, &m, &d, &extra) != 3 || s.size() != 10) {
    fail(Err::MalformedRow, "bad date '" + s + "' (expected YYYY-MM-DD)");
  }
  return from_ymd(y, m, d);
}

Date Date::from_ymd(int y, int m, int d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    fail(Err::MalformedRow, "invalid calendar date " + std::to_string(y) + "-" + std::to_string(m) + "-" +
                                std::to_string(d));
  }
  return Date{static_cast<std::int32_t>(sys_days(ymd).time_since_epoch().count())};
}

std::string Date::iso() const {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

bool Date::is_weekend() const {
  using namespace std::chrono;
  const weekday wd{sys_days{std::chrono::days{days}}};
  return wd == Saturday || wd == Sunday;
}

Date Date::next_weekday() const {
  Date d{days + 1};
  while (d.is_weekend()) ++d.days;
  return d;
}

static std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(splitmix64(a) ^ b); }
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix_seed(mix_seed(a, b), c); }
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fmt_full(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::Io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Err::Io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Err::Io, "short write to '" + path + "'");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kMissing;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace crashwatch
