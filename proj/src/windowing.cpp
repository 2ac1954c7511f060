#include "crashwatch/windowing.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include <json.hpp>

namespace crashwatch {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian float64");

WindowTensor make_windows(const FeaturePanel& panel, const LabelSeries& labels, int timesteps) {
  if (timesteps < 1) fail(Err::InvalidArgument, "timesteps must be >= 1");
  if (panel.dates.size() != labels.dates.size()) {
    fail(Err::DateMismatch, "panel and labels cover a different number of rows");
  }
  for (std::size_t i = 0; i < panel.dates.size(); ++i) {
    if (panel.dates[i].days != labels.dates[i].days) {
      fail(Err::DateMismatch, "panel and labels disagree at row " + std::to_string(i) + ": " +
                                  panel.dates[i].iso() + " vs " + labels.dates[i].iso());
    }
  }
  const auto rows = static_cast<std::int64_t>(panel.dates.size());
  const auto f = panel.n_cols();
  const auto t = static_cast<std::int64_t>(timesteps);

  WindowTensor out;
  out.t = t;
  out.f = f;
  out.feature_names = panel.names;
  for (std::int64_t i = t; i < rows; ++i) {
    bool ok = true;
    for (std::int64_t back = i - t; back < i && ok; ++back) {
      for (std::int64_t c = 0; c < f; ++c) {
        if (is_missing(panel.cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(back)])) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    for (std::int64_t back = i - t; back < i; ++back) {
      for (std::int64_t c = 0; c < f; ++c) {
        out.values.push_back(panel.cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(back)]);
      }
    }
    out.sample_dates.push_back(panel.dates[static_cast<std::size_t>(i)]);
    out.labels.push_back(labels.labels[static_cast<std::size_t>(i)]);
  }
  out.n = static_cast<std::int64_t>(out.sample_dates.size());
  return out;
}

std::vector<std::string> flat_feature_names(const WindowTensor& tensor) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(tensor.t * tensor.f));
  for (std::int64_t step = 0; step < tensor.t; ++step) {
    const std::int64_t lag = tensor.t - step;  // newest timestep is lag 1
    for (std::int64_t feat = 0; feat < tensor.f; ++feat) {
      names.push_back(tensor.feature_names[static_cast<std::size_t>(feat)] + "@" + std::to_string(lag));
    }
  }
  return names;
}

Matrix flatten_windows(const WindowTensor& tensor) {
  Matrix m(tensor.n, tensor.t * tensor.f);
  m.a = tensor.values;
  return m;
}

Standardizer fit_standardizer(const WindowTensor& tensor, const std::vector<std::int64_t>& train_idx) {
  if (train_idx.empty()) fail(Err::EmptySplit, "cannot fit a standardizer on an empty training split");
  for (std::int64_t i : train_idx) {
    if (i < 0 || i >= tensor.n) fail(Err::InvalidArgument, "train index out of range: " + std::to_string(i));
  }
  Standardizer s;
  s.mean.assign(static_cast<std::size_t>(tensor.f), 0.0);
  s.stddev.assign(static_cast<std::size_t>(tensor.f), 0.0);
  s.kept.assign(static_cast<std::size_t>(tensor.f), 1);
  const double count = static_cast<double>(train_idx.size()) * static_cast<double>(tensor.t);
  for (std::int64_t feat = 0; feat < tensor.f; ++feat) {
    double sum = 0.0;
    for (std::int64_t i : train_idx) {
      for (std::int64_t step = 0; step < tensor.t; ++step) sum += tensor.at(i, step, feat);
    }
    const double mu = sum / count;
    double ss = 0.0;
    for (std::int64_t i : train_idx) {
      for (std::int64_t step = 0; step < tensor.t; ++step) {
        const double d = tensor.at(i, step, feat) - mu;
        ss += d * d;
      }
    }
    const double sd = std::sqrt(ss / count);
    s.mean[static_cast<std::size_t>(feat)] = mu;
    s.stddev[static_cast<std::size_t>(feat)] = sd;
    if (sd == 0.0) {
      s.kept[static_cast<std::size_t>(feat)] = 0;
      std::fprintf(stderr, "warning: dropping zero-variance feature %s\n",
                   tensor.feature_names[static_cast<std::size_t>(feat)].c_str());
    } else {
      s.kept_names.push_back(tensor.feature_names[static_cast<std::size_t>(feat)]);
    }
  }
  s.n_kept = static_cast<std::int64_t>(s.kept_names.size());
  return s;
}

WindowTensor apply_standardizer(const WindowTensor& tensor, const Standardizer& s) {
  if (static_cast<std::int64_t>(s.kept.size()) != tensor.f) {
    fail(Err::ShapeMismatch, "standardizer was fit on a different feature count");
  }
  WindowTensor out;
  out.n = tensor.n;
  out.t = tensor.t;
  out.f = s.n_kept;
  out.sample_dates = tensor.sample_dates;
  out.labels = tensor.labels;
  out.feature_names = s.kept_names;
  out.values.reserve(static_cast<std::size_t>(out.n * out.t * out.f));
  for (std::int64_t i = 0; i < tensor.n; ++i) {
    for (std::int64_t step = 0; step < tensor.t; ++step) {
      for (std::int64_t feat = 0; feat < tensor.f; ++feat) {
        if (!s.kept[static_cast<std::size_t>(feat)]) continue;
        out.values.push_back((tensor.at(i, step, feat) - s.mean[static_cast<std::size_t>(feat)]) /
                             s.stddev[static_cast<std::size_t>(feat)]);
      }
    }
  }
  return out;
}

WindowTensor subset_windows(const WindowTensor& tensor, const std::vector<std::int64_t>& idx) {
  WindowTensor out;
  out.n = static_cast<std::int64_t>(idx.size());
  out.t = tensor.t;
  out.f = tensor.f;
  out.feature_names = tensor.feature_names;
  out.values.reserve(static_cast<std::size_t>(out.n * out.t * out.f));
  for (std::int64_t i : idx) {
    if (i < 0 || i >= tensor.n) fail(Err::InvalidArgument, "sample index out of range: " + std::to_string(i));
    const auto base = static_cast<std::size_t>(i * tensor.t * tensor.f);
    out.values.insert(out.values.end(), tensor.values.begin() + static_cast<std::ptrdiff_t>(base),
                      tensor.values.begin() + static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(tensor.t * tensor.f)));
    out.sample_dates.push_back(tensor.sample_dates[static_cast<std::size_t>(i)]);
    out.labels.push_back(tensor.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

void save_tensor(const WindowTensor& tensor, const std::string& path) {
  nlohmann::json header;
  header["n"] = tensor.n;
  header["t"] = tensor.t;
  header["f"] = tensor.f;
  header["names"] = tensor.feature_names;
  {
    std::vector<std::string> iso;
    iso.reserve(tensor.sample_dates.size());
    for (const Date& d : tensor.sample_dates) iso.push_back(d.iso());
    header["dates"] = iso;
  }
  header["labels"] = tensor.labels;
  std::string blob = header.dump();
  blob.push_back('\n');
  const std::size_t base = blob.size();
  blob.resize(base + tensor.values.size() * sizeof(double));
  std::memcpy(blob.data() + base, tensor.values.data(), tensor.values.size() * sizeof(double));
  write_file(path, blob);
}

WindowTensor load_tensor(const std::string& path) {
  const std::string blob = read_file(path);
  const std::size_t nl = blob.find('\n');
  if (nl == std::string::npos) fail(Err::Io, "tensor file has no header line: " + path);
  nlohmann::json header = nlohmann::json::parse(blob.substr(0, nl));
  WindowTensor out;
  out.n = header.at("n").get<std::int64_t>();
  out.t = header.at("t").get<std::int64_t>();
  out.f = header.at("f").get<std::int64_t>();
  out.feature_names = header.at("names").get<std::vector<std::string>>();
  for (const auto& iso : header.at("dates").get<std::vector<std::string>>()) {
    out.sample_dates.push_back(Date::from_iso(iso));
  }
  out.labels = header.at("labels").get<std::vector<std::uint8_t>>();
  const std::size_t want = static_cast<std::size_t>(out.n * out.t * out.f) * sizeof(double);
  if (blob.size() - nl - 1 != want) {
    fail(Err::Io, "tensor payload is " + std::to_string(blob.size() - nl - 1) + " bytes, expected " +
                      std::to_string(want));
  }
  out.values.resize(static_cast<std::size_t>(out.n * out.t * out.f));
  std::memcpy(out.values.data(), blob.data() + nl + 1, want);
  return out;
}

}  // namespace crashwatch
