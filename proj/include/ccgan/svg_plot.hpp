#pragma once

#include <string>
#include <vector>

namespace ccgan::svg {

// Bare-bones SVG charts for the optional report plots.

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

/// Grouped bars: one group per category, one bar per series (series.y holds
/// one value per category; series.x is unused).
std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& categories,
                      const std::vector<Series>& series);

}  // namespace ccgan::svg
