#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace beable::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool log_y = false;
};

/// Cell-centred map; values are row-major over (y, x) and NaN cells stay blank.
struct Heatmap {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> values;
};

/// Coordinates are written with six significant digits.
std::string render(const LinePlot& plot);
std::string render(const Heatmap& map);

void write(const std::filesystem::path& path, const std::string& document);

}  // namespace beable::svg
