#pragma once

#include <string>
#include <vector>

namespace anchorlab::svg {

// Rect-grid heatmap of a row-major matrix on a fixed [0, 1] color scale.
std::string heatmap(const std::vector<double>& values, int rows, int cols,
                    const std::string& title = "");

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Simple multi-series line chart with linear axes and a legend.
std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

}  // namespace anchorlab::svg
