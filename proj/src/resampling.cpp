#include "crashwatch/resampling.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "crashwatch/kernels.hpp"

namespace crashwatch {

static void check_xy(const Matrix& x, const std::vector<std::uint8_t>& y) {
  if (x.rows != static_cast<std::int64_t>(y.size())) {
    fail(Err::LengthMismatch,
         "matrix has " + std::to_string(x.rows) + " rows but " + std::to_string(y.size()) + " labels");
  }
}

static void check_cfg(const ResampleConfig& cfg) {
  if (cfg.smote_k < 1) fail(Err::InvalidArgument, "smote_k must be >= 1");
  if (cfg.enn_k < 1 || cfg.enn_k % 2 == 0) fail(Err::InvalidArgument, "enn_k must be a positive odd number");
  if (!(cfg.target_minority_ratio > 0.0)) fail(Err::InvalidArgument, "target_minority_ratio must be positive");
}

SmoteResult smote(const Matrix& x, const std::vector<std::uint8_t>& y, const ResampleConfig& cfg) {
  check_xy(x, y);
  check_cfg(cfg);

  std::vector<std::int64_t> ones;
  std::vector<std::int64_t> zeros;
  for (std::int64_t i = 0; i < x.rows; ++i) {
    (y[static_cast<std::size_t>(i)] ? ones : zeros).push_back(i);
  }
  const bool ones_minority = ones.size() <= zeros.size();
  const auto& minority = ones_minority ? ones : zeros;
  const auto& majority = ones_minority ? zeros : ones;
  const std::uint8_t minority_label = ones_minority ? 1 : 0;

  if (minority.size() < 2) {
    fail(Err::MinorityTooSmall, "SMOTE needs at least 2 minority samples, have " + std::to_string(minority.size()));
  }

  const auto n_min = static_cast<std::int64_t>(minority.size());
  const auto n_maj = static_cast<std::int64_t>(majority.size());
  const auto want = static_cast<std::int64_t>(std::llround(cfg.target_minority_ratio * static_cast<double>(n_maj)));
  const std::int64_t n_syn = std::max<std::int64_t>(0, want - n_min);

  SmoteResult out;
  out.smote_k_used = static_cast<int>(std::min<std::int64_t>(cfg.smote_k, n_min - 1));
  out.k_clamped = out.smote_k_used != cfg.smote_k;
  out.x = Matrix(x.rows + n_syn, x.cols);
  out.x.a.assign(x.a.begin(), x.a.end());
  out.x.a.resize(static_cast<std::size_t>((x.rows + n_syn) * x.cols));
  out.y = y;
  out.y.reserve(static_cast<std::size_t>(x.rows + n_syn));
  out.provenance.assign(static_cast<std::size_t>(x.rows), Provenance::Original);
  out.origin.resize(static_cast<std::size_t>(x.rows));
  for (std::int64_t i = 0; i < x.rows; ++i) out.origin[static_cast<std::size_t>(i)] = i;

  if (n_syn == 0) return out;

  Matrix xmin(n_min, x.cols);
  for (std::int64_t i = 0; i < n_min; ++i) {
    for (std::int64_t j = 0; j < x.cols; ++j) xmin(i, j) = x(minority[static_cast<std::size_t>(i)], j);
  }
  std::vector<std::int64_t> all_min(static_cast<std::size_t>(n_min));
  std::iota(all_min.begin(), all_min.end(), std::int64_t{0});
  const auto nn = knn_indices(xmin, all_min, all_min, out.smote_k_used, true);

  for (std::int64_t s = 0; s < n_syn; ++s) {
    // One generator per draw keeps the output independent of evaluation order.
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(s)));
    const std::int64_t base = s % n_min;
    const auto& cand = nn[static_cast<std::size_t>(base)];
    const std::int64_t pick = cand[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(cand.size())))];
    const double u = rng.uniform();
    const std::int64_t row = x.rows + s;
    for (std::int64_t j = 0; j < x.cols; ++j) {
      const double xi = xmin(base, j);
      out.x(row, j) = xi + u * (xmin(pick, j) - xi);
    }
    out.y.push_back(minority_label);
    out.provenance.push_back(Provenance::Synthetic);
    out.origin.push_back(-1);
  }
  return out;
}

EnnResult enn(const Matrix& x, const std::vector<std::uint8_t>& y, const ResampleConfig& cfg) {
  check_xy(x, y);
  check_cfg(cfg);
  if (cfg.enn_k >= x.rows) {
    fail(Err::InvalidArgument,
         "enn_k=" + std::to_string(cfg.enn_k) + " must be below the sample count " + std::to_string(x.rows));
  }
  std::vector<std::int64_t> all(static_cast<std::size_t>(x.rows));
  std::iota(all.begin(), all.end(), std::int64_t{0});
  const auto nn = knn_indices(x, all, all, cfg.enn_k, true);
  EnnResult out;
  out.removed.assign(static_cast<std::size_t>(x.rows), 0);
  std::int64_t kept = 0;
  for (std::int64_t i = 0; i < x.rows; ++i) {
    int votes = 0;
    for (std::int64_t j : nn[static_cast<std::size_t>(i)]) votes += y[static_cast<std::size_t>(j)] ? 1 : -1;
    const std::uint8_t vote = votes > 0 ? 1 : 0;
    if (vote != y[static_cast<std::size_t>(i)]) {
      out.removed[static_cast<std::size_t>(i)] = 1;
    } else {
      ++kept;
    }
  }
  out.x = Matrix(kept, x.cols);
  out.y.reserve(static_cast<std::size_t>(kept));
  std::int64_t r = 0;
  for (std::int64_t i = 0; i < x.rows; ++i) {
    if (out.removed[static_cast<std::size_t>(i)]) continue;
    for (std::int64_t j = 0; j < x.cols; ++j) out.x(r, j) = x(i, j);
    out.y.push_back(y[static_cast<std::size_t>(i)]);
    ++r;
  }
  return out;
}

ResampleResult smote_enn(const Matrix& x, const std::vector<std::uint8_t>& y, const ResampleConfig& cfg) {
  SmoteResult over = smote(x, y, cfg);
  EnnResult cleaned = enn(over.x, over.y, cfg);
  ResampleResult out;
  out.x = std::move(cleaned.x);
  out.y = std::move(cleaned.y);
  out.provenance = std::move(over.provenance);
  out.origin = std::move(over.origin);
  out.removed_by_enn = std::move(cleaned.removed);
  out.smote_k_used = over.smote_k_used;
  out.k_clamped = over.k_clamped;
  return out;
}

void save_resample_audit_csv(const ResampleResult& r, const std::string& path) {
  std::ostringstream os;
  os << "row,provenance,origin,label\n";
  std::size_t out_row = 0;
  for (std::size_t i = 0; i < r.provenance.size(); ++i) {
    const char* flag = r.removed_by_enn[i]                       ? "removed"
                       : r.provenance[i] == Provenance::Original ? "original"
                                                                 : "synthetic";
    // Surviving rows keep their post-ENN label; removed rows have none left.
    std::string label;
    if (!r.removed_by_enn[i]) {
      label = std::to_string(static_cast<int>(r.y[out_row]));
      ++out_row;
    }
    os << i << ',' << flag << ',' << r.origin[i] << ',' << label << '\n';
  }
  write_file(path, os.str());
}

}  // namespace crashwatch
