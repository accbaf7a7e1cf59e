#pragma once

#include <string>
#include <vector>

namespace mome {

struct SvgSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  std::string color;  // empty picks from a fixed palette by position
};

// Standalone SVG line chart: axes with numeric ticks, one polyline per
// series, legend when labels are present. Non-finite points are skipped.
std::string render_line_svg(const std::vector<SvgSeries>& series,
                            const std::string& title,
                            const std::string& x_label,
                            const std::string& y_label, int width = 640,
                            int height = 400);

}  // namespace mome
