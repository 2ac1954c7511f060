#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace crashwatch {

enum class Err {
  MalformedHeader,
  MalformedRow,
  DuplicateDate,
  EmptyFile,
  AnchorNotFound,
  AllMissingColumn,
  NonPositivePrice,
  UnknownSourceColumn,
  InsufficientData,
  AlphaOutOfRange,
  DateMismatch,
  ZeroVarianceFeature,
  MinorityTooSmall,
  NonFiniteActivation,
  EmptySplit,
  ShapeMismatch,
  LengthMismatch,
  NoPositives,
  SingleClassTraining,
  RangeOutsideData,
  InvalidArgument,
  Usage,
  Io,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

// Missing cells are NaN throughout.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double x) { return std::isnan(x); }

using Series = std::vector<double>;

// Calendar date stored as days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static Date from_iso(const std::string& s);  // "YYYY-MM-DD"
  static Date from_ymd(int y, int m, int d);
  std::string iso() const;
  bool is_weekend() const;
  Date next_weekday() const;

  auto operator<=>(const Date&) const = default;
};

// Dense row-major matrix of doubles.
struct Matrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<std::size_t>(r * c), fill) {}

  double& operator()(std::int64_t i, std::int64_t j) { return a[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(std::int64_t i, std::int64_t j) const { return a[static_cast<std::size_t>(i * cols + j)]; }
  double* row(std::int64_t i) { return a.data() + i * cols; }
  const double* row(std::int64_t i) const { return a.data() + i * cols; }

  bool operator==(const Matrix&) const = default;
};

// Deterministic RNG. All distribution transforms are hand-rolled so streams
// do not depend on the standard library's distribution implementations.
struct Rng {
  std::mt19937_64 g;

  explicit Rng(std::uint64_t seed = 0) : g(seed) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(g() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::int64_t below(std::int64_t n) { return static_cast<std::int64_t>(g() % static_cast<std::uint64_t>(n)); }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(below(i + 1))]);
    }
  }

 private:
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// splitmix64 step, used to derive stream seeds from (base, salt...) tuples.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d);
std::uint64_t hash_str(const std::string& s);

// Round-trip-exact decimal form, used wherever output files must be
// byte-stable and re-readable.
std::string fmt_full(double x);
// Fixed-precision form for display-oriented output (SVG coordinates).
std::string fmt_fixed(double x, int digits);

std::string read_file(const std::string& path);            // Err::Io
void write_file(const std::string& path, const std::string& bytes);

double mean_of(const std::vector<double>& v);

}  // namespace crashwatch
