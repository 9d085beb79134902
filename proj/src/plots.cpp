#include "dcond/plots.hpp"

#include "dcond/error.hpp"
#include "dcond/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace dcond {

namespace {

constexpr double kWidth = 640, kHeight = 400, kMargin = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

// Fixed precision keeps the SVG bytes stable across platforms.
std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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

std::string header(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << px(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">"
    << escape(title) << "</text>\n"
    << "<rect x=\"" << px(kMargin) << "\" y=\"" << px(kMargin) << "\" width=\"" << px(kWidth - 2 * kMargin)
    << "\" height=\"" << px(kHeight - 2 * kMargin) << "\" fill=\"none\" stroke=\"black\"/>\n";
  return o.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<std::pair<double, double>> polyline_coordinates(const Series& s, double x_min, double x_max,
                                                            double y_min, double y_max, double width,
                                                            double height) {
  const double xr = x_max > x_min ? x_max - x_min : 1.0;
  const double yr = y_max > y_min ? y_max - y_min : 1.0;
  std::vector<std::pair<double, double>> out;
  for (const auto& [x, y] : s.points)
    out.emplace_back((x - x_min) / xr * width, height - (y - y_min) / yr * height);
  return out;
}

std::string line_chart_svg(const std::string& title, const std::vector<Series>& series) {
  std::string svg = header(title);
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!any) x0 = x1 = x, y0 = y1 = y, any = true;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  std::ostringstream o;
  o << "<text x=\"" << px(kMargin) << "\" y=\"" << px(kHeight - 20) << "\" font-family=\"sans-serif\" "
    << "font-size=\"11\">x: " << px(x0) << " .. " << px(x1) << ", y: " << px(y0) << " .. " << px(y1)
    << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kPalette[i % std::size(kPalette)];
    auto pts = polyline_coordinates(series[i], x0, x1, y0, y1, kWidth - 2 * kMargin, kHeight - 2 * kMargin);
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k)
      o << (k ? " " : "") << px(kMargin + pts[k].first) << "," << px(kMargin + pts[k].second);
    o << "\"/>\n";
    o << "<text x=\"" << px(kWidth - kMargin - 120) << "\" y=\"" << px(kMargin + 16 + 14.0 * i)
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << colour << "\">" << escape(series[i].name)
      << "</text>\n";
  }
  return svg + o.str() + "</svg>\n";
}

std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars) {
  std::string svg = header(title);
  std::ostringstream o;
  const double inner_w = kWidth - 2 * kMargin, inner_h = kHeight - 2 * kMargin;
  const double slot = bars.empty() ? inner_w : inner_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].value, 0.0, 1.0);  // accuracies
    const double h = v * inner_h;
    const double x = kMargin + slot * i + slot * 0.15;
    o << "<rect x=\"" << px(x) << "\" y=\"" << px(kMargin + inner_h - h) << "\" width=\"" << px(slot * 0.7)
      << "\" height=\"" << px(h) << "\" fill=\"" << kPalette[i % 2] << "\"/>\n";
    if (bars[i].error > 0) {
      const double cx = x + slot * 0.35;
      const double lo = std::clamp(bars[i].value - bars[i].error, 0.0, 1.0);
      const double hi = std::clamp(bars[i].value + bars[i].error, 0.0, 1.0);
      o << "<line x1=\"" << px(cx) << "\" x2=\"" << px(cx) << "\" y1=\"" << px(kMargin + inner_h - lo * inner_h)
        << "\" y2=\"" << px(kMargin + inner_h - hi * inner_h) << "\" stroke=\"black\"/>\n";
    }
    o << "<text x=\"" << px(x + slot * 0.35) << "\" y=\"" << px(kHeight - kMargin + 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << escape(bars[i].label)
      << "</text>\n";
  }
  return svg + o.str() + "</svg>\n";
}

std::vector<Series> series_from_step_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.empty()) return {};
  const auto names = split_line(line);
  std::vector<Series> series;
  for (std::size_t c = 1; c < names.size(); ++c) series.push_back({names[c], {}});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    require(cells.size() == names.size(), ErrorKind::parse, "step log row has the wrong column count");
    try {
      const double x = std::stod(cells[0]);
      for (std::size_t c = 1; c < cells.size(); ++c) series[c - 1].points.emplace_back(x, std::stod(cells[c]));
    } catch (const std::logic_error&) {
      fail(ErrorKind::parse, "non-numeric step log entry");
    }
  }
  // Series with no rows carry nothing to draw.
  std::erase_if(series, [](const Series& s) { return s.points.empty(); });
  return series;
}

std::vector<Bar> bars_from_report(const std::string& report_json) {
  std::vector<Bar> bars;
  try {
    const auto j = nlohmann::json::parse(report_json);
    if (!j.contains("architectures")) return bars;
    for (const auto& a : j.at("architectures")) {
      std::string w;
      for (const auto& x : a.at("widths")) w += (w.empty() ? "" : "-") + std::to_string(x.get<int>());
      bars.push_back({w + " synthetic", a.at("mean").get<double>(), a.at("std").get<double>()});
      bars.push_back({w + " full", a.at("baseline_mean").get<double>(), a.at("baseline_std").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("report: ") + e.what());
  }
  return bars;
}

std::vector<std::filesystem::path> emit_plots(const std::string& report_json, const std::string& steps_csv,
                                              const std::filesystem::path& out) {
  const auto series = series_from_step_csv(steps_csv);
  const auto bars = bars_from_report(report_json);
  std::vector<Series> objective;
  for (const auto& s : series)
    if (s.name != "grad_norm") objective.push_back(s);

  std::ostringstream acc;
  acc << "label,value,error\n";
  for (const auto& b : bars) acc << b.label << "," << format_double(b.value) << "," << format_double(b.error) << "\n";

  std::vector<std::filesystem::path> paths{out / "objective.csv", out / "objective.svg", out / "accuracy.csv",
                                           out / "accuracy.svg"};
  write_text_file(paths[0], steps_csv);
  write_text_file(paths[1], line_chart_svg("objective vs step", objective));
  write_text_file(paths[2], acc.str());
  write_text_file(paths[3], bar_chart_svg("test accuracy", bars));
  return paths;
}

}  // namespace dcond
