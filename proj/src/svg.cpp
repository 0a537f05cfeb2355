#include "beable/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "beable/errors.hpp"

namespace beable::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-300) {
      const double pad = std::abs(lo) > 0 ? 0.05 * std::abs(lo) : 0.5;
      lo -= pad;
      hi += pad;
    }
  }
};

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 5.0, 10.0})
    if (raw <= f * mag) return f * mag;
  return 10.0 * mag;
}

void axes(std::string& out, const std::string& title, const std::string& xl, const std::string& yl,
          const Range& xr, const Range& yr, bool log_y) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  out += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) +
         "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#000\"/>\n";
  auto xtick = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto ytick = [&](double v) { return kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };
  const double xs = nice_step(xr.hi - xr.lo);
  for (double v = std::ceil(xr.lo / xs) * xs; v <= xr.hi + 1e-9 * xs; v += xs) {
    const double x = xtick(v);
    out += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(x) +
           "\" y2=\"" + num(kTop + ph + 5) + "\" stroke=\"#000\"/>\n";
    out += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + num(std::abs(v) < 1e-12 * xs ? 0.0 : v) +
           "</text>\n";
  }
  const double ys = nice_step(yr.hi - yr.lo);
  for (double v = std::ceil(yr.lo / ys) * ys; v <= yr.hi + 1e-9 * ys; v += ys) {
    const double y = ytick(v);
    const double shown = std::abs(v) < 1e-12 * ys ? 0.0 : v;
    out += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) +
           "\" y2=\"" + num(y) + "\" stroke=\"#000\"/>\n";
    out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" +
           (log_y ? "1e" + num(shown) : num(shown)) + "</text>\n";
  }
  out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kTop - 14) +
         "\" font-size=\"14\" text-anchor=\"middle\">" + escape(title) + "</text>\n";
  out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 14) +
         "\" font-size=\"12\" text-anchor=\"middle\">" + escape(xl) + "</text>\n";
  out += "<text x=\"16\" y=\"" + num(kTop + ph / 2) +
         "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + ph / 2) + ")\">" + escape(yl) + "</text>\n";
}

std::string header() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
}

}  // namespace

std::string render(const LinePlot& plot) {
  Range xr, yr;
  auto yv = [&plot](double v) {
    if (!plot.log_y) return v;
    return v > 0.0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN();
  };
  for (const auto& s : plot.series) {
    if (s.x.size() != s.y.size()) throw ConfigError("plot series '" + s.label + "' is ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xr.add(s.x[i]);
      yr.add(yv(s.y[i]));
    }
  }
  xr.settle();
  yr.settle();
  std::string out = header();
  axes(out, plot.title, plot.x_label, plot.y_label, xr, yr, plot.log_y);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    std::string points;
    auto flush = [&] {
      if (points.empty()) return;
      out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) +
             "\" stroke-width=\"1.2\" points=\"" + points + "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = yv(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(y)) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += num(kLeft + (s.x[i] - xr.lo) / (xr.hi - xr.lo) * pw) + "," +
                num(kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph);
    }
    flush();
    const double ly = kTop + 14.0 + 16.0 * static_cast<double>(k);
    out += "<line x1=\"" + num(kWidth - kRight + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kWidth - kRight + 30) + "\" y2=\"" + num(ly) + "\" stroke=\"" + colour +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(kWidth - kRight + 34) + "\" y=\"" + num(ly + 4) +
           "\" font-size=\"11\">" + escape(s.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string render(const Heatmap& map) {
  if (map.values.size() != map.x.size() * map.y.size())
    throw ConfigError("heatmap values do not match its axes");
  if (map.x.empty() || map.y.empty()) throw ConfigError("heatmap needs at least one cell");
  const double dx = map.x.size() > 1 ? map.x[1] - map.x[0] : 1.0;
  const double dy = map.y.size() > 1 ? map.y[1] - map.y[0] : 1.0;
  Range xr, yr, vr;
  xr.add(map.x.front() - dx / 2);
  xr.add(map.x.back() + dx / 2);
  yr.add(map.y.front() - dy / 2);
  yr.add(map.y.back() + dy / 2);
  for (double v : map.values) vr.add(v);
  xr.settle();
  yr.settle();
  vr.settle();
  std::string out = header();
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double cw = std::abs(dx) / (xr.hi - xr.lo) * pw, chh = std::abs(dy) / (yr.hi - yr.lo) * ph;
  auto colour = [&vr](double v) {
    const double f = std::clamp((v - vr.lo) / (vr.hi - vr.lo), 0.0, 1.0);
    const int r = static_cast<int>(std::lround(255.0 * f));
    const int b = static_cast<int>(std::lround(255.0 * (1.0 - f)));
    const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(2.0 * f - 1.0)) * 0.8));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };
  for (std::size_t j = 0; j < map.y.size(); ++j)
    for (std::size_t i = 0; i < map.x.size(); ++i) {
      const double v = map.values[j * map.x.size() + i];
      if (!std::isfinite(v)) continue;
      const double x = kLeft + (map.x[i] - dx / 2 - xr.lo) / (xr.hi - xr.lo) * pw;
      const double y = kTop + ph - (map.y[j] + dy / 2 - yr.lo) / (yr.hi - yr.lo) * ph;
      out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cw) +
             "\" height=\"" + num(chh) + "\" fill=\"" + colour(v) + "\"/>\n";
    }
  axes(out, map.title, map.x_label, map.y_label, xr, yr, false);
  const double bar_x = kWidth - kRight + 20;
  for (int k = 0; k < 50; ++k) {
    const double f = k / 49.0;
    out += "<rect x=\"" + num(bar_x) + "\" y=\"" + num(kTop + ph - (k + 1) * ph / 50.0) +
           "\" width=\"16\" height=\"" + num(ph / 50.0 + 0.5) + "\" fill=\"" +
           colour(vr.lo + f * (vr.hi - vr.lo)) + "\"/>\n";
  }
  out += "<text x=\"" + num(bar_x + 22) + "\" y=\"" + num(kTop + ph) + "\" font-size=\"11\">" +
         num(vr.lo) + "</text>\n";
  out += "<text x=\"" + num(bar_x + 22) + "\" y=\"" + num(kTop + 10) + "\" font-size=\"11\">" +
         num(vr.hi) + "</text>\n";
  out += "</svg>\n";
  return out;
}

void write(const std::filesystem::path& path, const std::string& document) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << document;
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace beable::svg
