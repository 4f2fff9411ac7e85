#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dtrf::plot {

struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

// Loss curves and similar: one polyline per series, auto-scaled axes.
void line_plot(const std::filesystem::path& path, const std::vector<Series>& series, const std::string& title,
               const std::string& xlabel, const std::string& ylabel);

struct BarGroup {
    std::string label;               // group name on the x axis
    std::vector<double> values;      // one per series
    std::vector<double> errors;      // error-bar half-heights (may be empty)
};

// Grouped bars with error whiskers (mean +/- std reporting).
void bar_plot(const std::filesystem::path& path, const std::vector<std::string>& series_names,
              const std::vector<BarGroup>& groups, const std::string& title, const std::string& ylabel);

} // namespace dtrf::plot
