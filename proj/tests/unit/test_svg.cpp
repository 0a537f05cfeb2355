#include <cmath>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "beable/errors.hpp"
#include "beable/svg.hpp"

using namespace beable;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Every element opened with '<name' is closed by '/>' or '</name>'.
bool balanced(const std::string& doc) {
  int depth = 0;
  std::size_t pos = 0;
  while ((pos = doc.find('<', pos)) != std::string::npos) {
    const auto end = doc.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = doc.substr(pos, end - pos + 1);
    if (tag[1] == '/')
      --depth;
    else if (tag[tag.size() - 2] != '/')
      ++depth;
    if (depth < 0) return false;
    pos = end + 1;
  }
  return depth == 0;
}

}  // namespace

TEST(Svg, LinePlotStructure) {
  svg::LinePlot plot{"Populations <t>", "t (fs)", "P", {}};
  plot.series.push_back({"a", {0, 1, 2, 3}, {0, 0.5, 0.2, 1}});
  plot.series.push_back({"b", {0, 1, 2}, {1, std::nan(""), 0}});
  const std::string doc = svg::render(plot);
  EXPECT_EQ(doc.rfind("<svg", 0), 0u);
  EXPECT_EQ(doc.substr(doc.size() - 7), "</svg>\n");
  EXPECT_TRUE(balanced(doc));
  // Series b is split at its NaN into two one-point polylines.
  EXPECT_EQ(count(doc, "<polyline"), 3u);
  EXPECT_NE(doc.find("Populations &lt;t&gt;"), std::string::npos);
  EXPECT_EQ(doc, svg::render(plot));
}

TEST(Svg, LogAxisSkipsNonPositive) {
  svg::LinePlot plot{"log", "x", "y", {{"s", {1, 2, 3}, {1e-3, 0.0, 10.0}}}, true};
  const std::string doc = svg::render(plot);
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(count(doc, "<polyline"), 2u);
}

TEST(Svg, HeatmapCells) {
  svg::Heatmap map{"map", "M_min", "M_max", {0.3, 0.4, 0.5}, {0.9, 1.0}, {}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  map.values = {1, 2, nan, 4, 5, 6};
  const std::string doc = svg::render(map);
  EXPECT_TRUE(balanced(doc));
  // 5 finite cells, 50 colour-bar slices, frame and background.
  EXPECT_EQ(count(doc, "<rect"), 5u + 50u + 2u);
  map.values.pop_back();
  EXPECT_THROW(svg::render(map), ConfigError);
}

TEST(Svg, RaggedSeriesRejected) {
  svg::LinePlot plot{"x", "x", "y", {{"s", {1, 2}, {1}}}};
  EXPECT_THROW(svg::render(plot), ConfigError);
}
