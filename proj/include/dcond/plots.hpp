#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dcond {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct Bar {
  std::string label;
  double value = 0.0;
  double error = 0.0;
};

/// Pixel coordinates of a series inside a width x height plot box, y growing upward
/// in data space and downward on screen. Shared by the renderer and tests.
std::vector<std::pair<double, double>> polyline_coordinates(const Series& s, double x_min, double x_max,
                                                            double y_min, double y_max, double width,
                                                            double height);

std::string line_chart_svg(const std::string& title, const std::vector<Series>& series);
std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars);

/// Series of every numeric column of a step log (first column is the x axis).
std::vector<Series> series_from_step_csv(const std::string& csv);
/// Condensed and baseline accuracy bars per architecture from a report.
std::vector<Bar> bars_from_report(const std::string& report_json);

/// Writes objective.csv/.svg and accuracy.csv/.svg into `out`; returns the paths.
std::vector<std::filesystem::path> emit_plots(const std::string& report_json, const std::string& steps_csv,
                                              const std::filesystem::path& out);

}  // namespace dcond
