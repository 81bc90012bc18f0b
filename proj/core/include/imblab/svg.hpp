#pragma once

#include <string>
#include <utility>
#include <vector>

namespace imblab {

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Simple polyline plot with axes, ticks and a legend. Pure text output, no
// plotting dependency; identical inputs give identical bytes.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<SvgSeries>& series,
                          int width = 860, int height = 520);

}  // namespace imblab
