#pragma once
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/checkpoint.hpp"  // format_double

namespace mlmlab {

// Minimal polyline line chart with a log10 y axis, enough for class-count
// figures. Deterministic output: fixed formatting, no timestamps.
class SvgLineChart {
public:
  SvgLineChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add_series(const std::string& name, std::vector<std::pair<double, double>> points) {
    if (points.empty()) throw std::invalid_argument("svg: empty series " + name);
    series_.push_back({name, std::move(points)});
  }

  // horizontal reference line, e.g. the MLM class count
  void add_hline(const std::string& name, double y) { hlines_.push_back({name, y}); }

  std::string render() const {
    if (series_.empty() && hlines_.empty()) throw std::invalid_argument("svg: nothing to draw");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series_)
      for (auto [x, y] : s.points) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, log_y(y));
        ymax = std::max(ymax, log_y(y));
      }
    for (const auto& [name, y] : hlines_) {
      ymin = std::min(ymin, log_y(y));
      ymax = std::max(ymax, log_y(y));
    }
    if (xmin >= xmax) { xmin -= 0.5; xmax += 0.5; }
    if (ymin >= ymax) { ymin -= 0.5; ymax += 0.5; }

    auto sx = [&](double x) { return kPadL + (x - xmin) / (xmax - xmin) * kPlotW; };
    auto sy = [&](double y) { return kPadT + kPlotH - (log_y(y) - ymin) / (ymax - ymin) * kPlotH; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << escape(title_) << "</text>\n";
    // axes
    out << "<line x1=\"" << kPadL << "\" y1=\"" << kPadT << "\" x2=\"" << kPadL << "\" y2=\""
        << kPadT + kPlotH << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kPadL << "\" y1=\"" << kPadT + kPlotH << "\" x2=\""
        << kPadL + kPlotW << "\" y2=\"" << kPadT + kPlotH << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kPadL + kPlotW / 2 << "\" y=\"" << kH - 8
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(x_label_) << "</text>\n";
    out << "<text x=\"14\" y=\"" << kPadT + kPlotH / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
        << kPadT + kPlotH / 2 << ")\">" << escape(y_label_) << " (log10)</text>\n";

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    int ci = 0;
    for (const auto& s : series_) {
      const char* color = kColors[ci % 5];
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (auto [x, y] : s.points)
        out << format_double(sx(x)) << "," << format_double(sy(y)) << " ";
      out << "\"/>\n";
      for (auto [x, y] : s.points)
        out << "<circle cx=\"" << format_double(sx(x)) << "\" cy=\"" << format_double(sy(y))
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      out << "<text x=\"" << kPadL + kPlotW + 6 << "\" y=\"" << kPadT + 14 + 16 * ci
          << "\" font-size=\"11\" fill=\"" << color << "\">" << escape(s.name) << "</text>\n";
      ++ci;
    }
    for (const auto& [name, y] : hlines_) {
      const char* color = kColors[ci % 5];
      out << "<line x1=\"" << kPadL << "\" y1=\"" << format_double(sy(y)) << "\" x2=\""
          << kPadL + kPlotW << "\" y2=\"" << format_double(sy(y)) << "\" stroke=\"" << color
          << "\" stroke-dasharray=\"4 3\"/>\n";
      out << "<text x=\"" << kPadL + kPlotW + 6 << "\" y=\"" << kPadT + 14 + 16 * ci
          << "\" font-size=\"11\" fill=\"" << color << "\">" << escape(name) << "</text>\n";
      ++ci;
    }
    out << "</svg>\n";
    return out.str();
  }

private:
  static double log_y(double y) {
    if (y <= 0) throw std::invalid_argument("svg: log axis needs positive values");
    return std::log10(y);
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out.push_back(c);
    }
    return out;
  }

  static constexpr int kW = 640, kH = 420;
  static constexpr double kPadL = 60, kPadT = 40, kPlotW = 460, kPlotH = 320;

  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
  };

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  std::vector<std::pair<std::string, double>> hlines_;
};

}  // namespace mlmlab
