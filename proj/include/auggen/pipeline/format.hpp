#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace auggen::pipeline {

// 320 -> "320", 1600 -> "1.6K", 10000 -> "10K", 1200000 -> "1.2M".
std::string format_count(long n);
// "(10K × 20)".
std::string mix_key(long classes, long samples);
// Two decimals, trailing zeros dropped: 1.6875 -> "1.69", 1.5 -> "1.5", 1 -> "1".
std::string format_ratio(double r);

struct MeanStd {
  double mean = 0;
  double std = 0;  // population
  std::size_t n = 0;
};
MeanStd mean_std(const std::vector<double>& v);
// Fractions rendered as percent, "34.93±0.50". Empty input gives "FAILED".
std::string percent_cell(const std::vector<double>& fractions);

// One CSV line; fields with commas, quotes or newlines are quoted.
std::string csv_row(const std::vector<std::string>& fields);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;  // non-positive x values are dropped
  std::vector<Series> series;
};

// Self-contained SVG line chart with axes, ticks and a legend.
std::string line_plot_svg(const PlotSpec& spec);

// Fixed-width text table; first row is the header.
std::string text_table(const std::vector<std::vector<std::string>>& rows);

}  // namespace auggen::pipeline
