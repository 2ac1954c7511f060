#include "crashwatch/plotting.hpp"

#include <algorithm>
#include <sstream>

namespace crashwatch {

void save_probability_csv(const ProbabilitySeries& s, const std::string& path) {
  if (s.dates.size() != s.probs.size() || s.dates.size() != s.labels.size()) {
    fail(Err::LengthMismatch, "probability series fields differ in length");
  }
  std::ostringstream os;
  os << "date,probability,label\n";
  for (std::size_t i = 0; i < s.dates.size(); ++i) {
    os << s.dates[i].iso() << ',' << fmt_full(s.probs[i]) << ',' << static_cast<int>(s.labels[i]) << '\n';
  }
  write_file(path, os.str());
}

ProbabilitySeries load_probability_csv(const std::string& path) {
  const std::string text = read_file(path);
  ProbabilitySeries s;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) fail(Err::EmptyFile, "no header in " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,probability,label") fail(Err::MalformedHeader, "unexpected header in " + path);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      fail(Err::MalformedRow, path + " line " + std::to_string(lineno));
    }
    s.dates.push_back(Date::from_iso(line.substr(0, c1)));
    try {
      s.probs.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
      s.labels.push_back(static_cast<std::uint8_t>(std::stoi(line.substr(c2 + 1)) != 0));
    } catch (const std::exception&) {
      fail(Err::MalformedRow, path + " line " + std::to_string(lineno));
    }
  }
  return s;
}

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 360.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 24.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 48.0;

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string render_probability_svg(const ProbabilitySeries& s) {
  if (s.dates.size() != s.probs.size() || s.dates.size() != s.labels.size()) {
    fail(Err::LengthMismatch, "probability series fields differ in length");
  }
  const auto n = s.dates.size();
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto xpos = [&](std::size_t i) {
    if (n <= 1) return kLeft + plot_w * 0.5;
    return kLeft + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto ypos = [&](double p) { return kTop + plot_h * (1.0 - std::clamp(p, 0.0, 1.0)); };
  auto fx = [](double v) { return fmt_fixed(v, 2); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << static_cast<int>(kWidth) << "\" height=\""
     << static_cast<int>(kHeight) << "\" viewBox=\"0 0 " << static_cast<int>(kWidth) << ' '
     << static_cast<int>(kHeight) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << static_cast<int>(kWidth) << "\" height=\""
     << static_cast<int>(kHeight) << "\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << fx(kLeft) << "\" y=\"24\" font-family=\"monospace\" font-size=\"14\">"
     << xml_escape(s.title) << "</text>\n";

  // crash markers behind everything else
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.labels[i]) continue;
    os << "<line x1=\"" << fx(xpos(i)) << "\" y1=\"" << fx(kTop) << "\" x2=\"" << fx(xpos(i)) << "\" y2=\""
       << fx(kTop + plot_h) << "\" stroke=\"#d62728\" stroke-opacity=\"0.30\" stroke-width=\"1\"/>\n";
  }

  // frame and y grid
  os << "<rect x=\"" << fx(kLeft) << "\" y=\"" << fx(kTop) << "\" width=\"" << fx(plot_w) << "\" height=\""
     << fx(plot_h) << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double p = 0.25 * tick;
    os << "<line x1=\"" << fx(kLeft - 4) << "\" y1=\"" << fx(ypos(p)) << "\" x2=\"" << fx(kLeft) << "\" y2=\""
       << fx(ypos(p)) << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << fx(kLeft - 8) << "\" y=\"" << fx(ypos(p) + 4) << "\" font-family=\"monospace\""
       << " font-size=\"11\" text-anchor=\"end\">" << fmt_fixed(p, 2) << "</text>\n";
  }

  // date ticks (up to 6, evenly spaced by index)
  if (n > 0) {
    const std::size_t n_ticks = std::min<std::size_t>(6, n);
    for (std::size_t k = 0; k < n_ticks; ++k) {
      const std::size_t i = n_ticks == 1 ? 0 : k * (n - 1) / (n_ticks - 1);
      os << "<line x1=\"" << fx(xpos(i)) << "\" y1=\"" << fx(kTop + plot_h) << "\" x2=\"" << fx(xpos(i))
         << "\" y2=\"" << fx(kTop + plot_h + 4) << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
      os << "<text x=\"" << fx(xpos(i)) << "\" y=\"" << fx(kTop + plot_h + 18) << "\" font-family=\"monospace\""
         << " font-size=\"11\" text-anchor=\"middle\">" << s.dates[i].iso() << "</text>\n";
    }
  }

  // decision threshold rule
  os << "<line x1=\"" << fx(kLeft) << "\" y1=\"" << fx(ypos(s.threshold)) << "\" x2=\"" << fx(kLeft + plot_w)
     << "\" y2=\"" << fx(ypos(s.threshold)) << "\" stroke=\"#555555\" stroke-width=\"1\""
     << " stroke-dasharray=\"6,4\"/>\n";
  os << "<text x=\"" << fx(kLeft + plot_w) << "\" y=\"" << fx(ypos(s.threshold) - 4)
     << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">threshold " << fmt_fixed(s.threshold, 2)
     << "</text>\n";

  if (n > 0) {
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      if (i) os << ' ';
      os << fx(xpos(i)) << ',' << fx(ypos(s.probs[i]));
    }
    os << "\"/>\n";
  }

  os << "<text x=\"" << fx(kLeft) << "\" y=\"" << fx(kHeight - 8) << "\" font-family=\"monospace\""
     << " font-size=\"11\">crash probability (line), actual crashes (red bands)</text>\n";
  os << "</svg>\n";
  return os.str();
}

void save_probability_svg(const ProbabilitySeries& s, const std::string& path) {
  write_file(path, render_probability_svg(s));
}

}  // namespace crashwatch
