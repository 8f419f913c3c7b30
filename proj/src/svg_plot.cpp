#include "ccgan/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ccgan::svg {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

struct Range {
  double lo = INFINITY, hi = -INFINITY;
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void fix() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi == lo) hi = lo + 1;
  }
};

void frame(std::ostringstream& s, const std::string& title, const std::string& x_label, const std::string& y_label,
           const Range& y) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
    << esc(x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << (kTop + kH - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (kTop + kH - kBottom) / 2 << ")\">" << esc(y_label) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = y.lo + (y.hi - y.lo) * k / 4.0;
    const double py = kH - kBottom - (kH - kTop - kBottom) * k / 4.0;
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

void legend(std::ostringstream& s, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 18.0 * static_cast<double>(i);
    s << "<rect x=\"" << kW - kRight + 12 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
      << kColors[i % 7] << "\"/><text x=\"" << kW - kRight + 30 << "\" y=\"" << y + 10 << "\">"
      << esc(series[i].name) << "</text>\n";
  }
}

}  // namespace

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  Range xr, yr;
  for (const auto& s : series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.fix();
  yr.fix();
  std::ostringstream s;
  frame(s, title, x_label, y_label, yr);
  for (int k = 0; k <= 4; ++k) {
    const double v = xr.lo + (xr.hi - xr.lo) * k / 4.0;
    s << "<text x=\"" << kLeft + (kW - kLeft - kRight) * k / 4.0 << "\" y=\"" << kH - kBottom + 16
      << "\" text-anchor=\"middle\">" << num(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    s << "<polyline fill=\"none\" stroke=\"" << kColors[i % 7] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < std::min(series[i].x.size(), series[i].y.size()); ++k) {
      if (!std::isfinite(series[i].y[k])) continue;
      const double px = kLeft + (series[i].x[k] - xr.lo) / (xr.hi - xr.lo) * (kW - kLeft - kRight);
      const double py = kH - kBottom - (series[i].y[k] - yr.lo) / (yr.hi - yr.lo) * (kH - kTop - kBottom);
      s << num(px) << "," << num(py) << " ";
    }
    s << "\"/>\n";
  }
  legend(s, series);
  s << "</svg>\n";
  return s.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& categories,
                      const std::vector<Series>& series) {
  Range yr;
  yr.add(0.0);
  for (const auto& s : series) {
    for (double v : s.y) yr.add(v);
  }
  yr.fix();
  std::ostringstream s;
  frame(s, title, "", y_label, yr);
  const double group_w = (kW - kLeft - kRight) / std::max<double>(1.0, static_cast<double>(categories.size()));
  const double bar_w = group_w * 0.8 / std::max<double>(1.0, static_cast<double>(series.size()));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c) + group_w * 0.1;
    s << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">"
      << esc(categories[c]) << "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (c >= series[i].y.size() || !std::isfinite(series[i].y[c])) continue;
      const double h = (series[i].y[c] - yr.lo) / (yr.hi - yr.lo) * (kH - kTop - kBottom);
      s << "<rect x=\"" << num(gx + bar_w * static_cast<double>(i)) << "\" y=\"" << num(kH - kBottom - h)
        << "\" width=\"" << num(bar_w) << "\" height=\"" << num(h) << "\" fill=\"" << kColors[i % 7] << "\"/>\n";
    }
  }
  legend(s, series);
  s << "</svg>\n";
  return s.str();
}

}  // namespace ccgan::svg
