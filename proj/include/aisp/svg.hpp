#pragma once

#include <string>
#include <utility>
#include <vector>

namespace aisp {

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Self-contained SVG line chart with axes, ticks, and a legend.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<ChartSeries>& series);

}  // namespace aisp
