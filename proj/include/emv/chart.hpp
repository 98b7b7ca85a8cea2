#pragma once

#include "emv/identify.hpp"

#include <string>
#include <utility>
#include <vector>

namespace emv {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string style = "solid"; // solid, dashed or dotted
};

struct ChartPanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Stacked line-chart panels as a standalone SVG document. Non-finite
/// points break the line. No timestamps, so output is a function of input.
std::string render_svg(const std::string& title, const std::vector<ChartPanel>& panels);

/// The plotted numbers in long form: panel,series,x,y.
std::string chart_csv(const std::vector<ChartPanel>& panels);

/// Exogenous, maturity and vintage panels with one series per labelled
/// decomposition.
std::vector<ChartPanel> decomposition_panels(
    const std::vector<std::pair<std::string, Decomposition>>& items);

} // namespace emv
