#include "pieclam/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pieclam::svg {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 48.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void open(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << escape(title) << "</text>\n";
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = hi = 0.0;
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

void axes(std::ostringstream& out, const Range& xr, const Range& yr, const std::string& x_label,
          const std::string& y_label) {
  const double x0 = kMargin;
  const double y0 = kHeight - kMargin;
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << kWidth - kMargin / 2 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << kMargin
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << x0 << "\" y=\"" << y0 + 16 << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << num(xr.lo) << "</text>\n"
      << "<text x=\"" << kWidth - kMargin / 2 << "\" y=\"" << y0 + 16
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(xr.hi) << "</text>\n"
      << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << num(yr.lo) << "</text>\n"
      << "<text x=\"" << x0 - 4 << "\" y=\"" << kMargin + 8 << "\" text-anchor=\"end\" "
      << "font-family=\"sans-serif\" font-size=\"10\">" << num(yr.hi) << "</text>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"12\">" << escape(x_label) << "</text>\n"
      << "<text x=\"14\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 14 " << kHeight / 2 << ")\">" << escape(y_label)
      << "</text>\n";
}

double px(double v, const Range& r) {
  return kMargin + (v - r.lo) / (r.hi - r.lo) * (kWidth - 1.5 * kMargin);
}
double py(double v, const Range& r) {
  return kHeight - kMargin - (v - r.lo) / (r.hi - r.lo) * (kHeight - 2.0 * kMargin);
}

}  // namespace

std::string heatmap(const Eigen::MatrixXd& values, const std::string& title) {
  std::ostringstream out;
  open(out, title);
  const Eigen::Index rows = values.rows();
  const Eigen::Index cols = values.cols();
  Range r;
  for (Eigen::Index i = 0; i < values.size(); ++i) r.add(values.data()[i]);
  r.settle();
  const double side = kWidth - 2.0 * kMargin;
  const double cw = cols ? side / static_cast<double>(cols) : side;
  const double ch = rows ? side / static_cast<double>(rows) : side;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = std::isfinite(values(i, j)) ? values(i, j) : r.lo;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - (v - r.lo) / (r.hi - r.lo))));
      out << "<rect x=\"" << num(kMargin + j * cw) << "\" y=\"" << num(kMargin + i * ch) << "\" width=\""
          << num(cw + 0.05) << "\" height=\"" << num(ch + 0.05) << "\" fill=\"rgb(" << shade << "," << shade
          << "," << shade << ")\"/>\n";
    }
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">range [" << num(r.lo) << ", "
      << num(r.hi) << "]</text>\n</svg>\n";
  return out.str();
}

std::string scatter(const std::vector<Point>& points, const std::string& title, const std::string& x_label,
                    const std::string& y_label) {
  std::ostringstream out;
  open(out, title);
  Range xr;
  Range yr;
  for (const Point& p : points) {
    xr.add(p.x);
    yr.add(p.y);
  }
  xr.settle();
  yr.settle();
  axes(out, xr, yr, x_label, y_label);
  for (const Point& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    const char* color = kPalette[static_cast<std::size_t>(std::abs(p.group)) % std::size(kPalette)];
    out << "<circle cx=\"" << num(px(p.x, xr)) << "\" cy=\"" << num(py(p.y, yr)) << "\" r=\"2.5\" fill=\""
        << color << "\" fill-opacity=\"0.7\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
  std::ostringstream out;
  open(out, title);
  Range xr;
  Range yr;
  for (const Series& s : series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.settle();
  yr.settle();
  axes(out, xr, yr, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      out << num(px(s.x[i], xr)) << "," << num(py(s.y[i], yr)) << " ";
    }
    out << "\"/>\n"
        << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kMargin + 14.0 * static_cast<double>(k)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">"
        << escape(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace pieclam::svg
