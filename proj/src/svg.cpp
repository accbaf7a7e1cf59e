#include "mome/svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mome/error.hpp"

namespace mome {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void grow(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  void finalize() {
    if (lo > hi) {  // nothing plottable
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      double pad = std::max(1.0, std::abs(lo)) * 0.5;
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

std::string render_line_svg(const std::vector<SvgSeries>& series,
                            const std::string& title,
                            const std::string& x_label,
                            const std::string& y_label, int width,
                            int height) {
  if (width < 100 || height < 100) {
    throw ConfigError("render_line_svg: canvas below 100x100");
  }
  Range rx, ry;
  for (const SvgSeries& s : series) {
    if (s.xs.size() != s.ys.size()) {
      throw DimensionError("render_line_svg: series '" + s.label + "' has " +
                           std::to_string(s.xs.size()) + " x vs " +
                           std::to_string(s.ys.size()) + " y values");
    }
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (std::isfinite(s.xs[i]) && std::isfinite(s.ys[i])) {
        rx.grow(s.xs[i]);
        ry.grow(s.ys[i]);
      }
    }
  }
  rx.finalize();
  ry.finalize();

  const double ml = 64, mr = 20, mt = 40, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double y) {
    return mt + ph - (y - ry.lo) / (ry.hi - ry.lo) * ph;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"15\">"
     << escape(title) << "</text>\n";

  // axes
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    double fx = rx.lo + (rx.hi - rx.lo) * i / ticks;
    double fy = ry.lo + (ry.hi - ry.lo) * i / ticks;
    double tx = px(fx), ty = py(fy);
    os << "<line x1=\"" << tx << "\" y1=\"" << mt + ph << "\" x2=\"" << tx
       << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << tx << "\" y=\"" << mt + ph + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << num(fx) << "</text>\n";
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << ty << "\" x2=\"" << ml
       << "\" y2=\"" << ty << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << ty + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << num(fy) << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\">"
     << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\" transform=\"rotate(-90 16 "
     << mt + ph / 2 << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const SvgSeries& s = series[si];
    std::string color =
        s.color.empty() ? kPalette[si % (sizeof(kPalette) / sizeof(*kPalette))]
                        : s.color;
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      if (!first) os << " ";
      os << num(px(s.xs[i])) << "," << num(py(s.ys[i]));
      first = false;
    }
    os << "\"/>\n";
    if (!s.label.empty()) {
      double ly = mt + 14 + 16.0 * static_cast<double>(si);
      os << "<line x1=\"" << ml + pw - 120 << "\" y1=\"" << ly << "\" x2=\""
         << ml + pw - 100 << "\" y2=\"" << ly << "\" stroke=\"" << color
         << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << ml + pw - 94 << "\" y=\"" << ly + 4
         << "\" font-family=\"sans-serif\" font-size=\"11\">"
         << escape(s.label) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mome
