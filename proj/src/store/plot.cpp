#include "store/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "common/binio.hpp"
#include "common/error.hpp"
#include "store/table.hpp"

namespace crlab::store {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 190.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;
constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                "#9467bd", "#ff7f0e", "#17becf"};

std::string fmt(double v) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
  }
};

}  // namespace

std::string plot_svg(std::span<const MetricSeries> series, const std::string& title) {
  if (series.empty()) throw_usage("render_plot: no series given");
  Range xr, yr;
  for (const auto& s : series) {
    s.validate();
    if (s.points.empty()) throw_usage("render_plot: series '" + s.name + "' is empty");
    for (const auto& p : s.points) {
      xr.add(p.x);
      yr.add(p.y - p.y_err.value_or(0.0));
      yr.add(p.y + p.y_err.value_or(0.0));
    }
  }
  xr.pad();
  yr.pad();
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
         "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) + "\" fill=\"white\"/>\n";
  if (!title.empty()) {
    svg += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
           escape(title) + "</text>\n";
  }
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop + ph) + "\" x2=\"" + fmt(kLeft + pw) + "\" y2=\"" +
         fmt(kTop + ph) + "\"/>\n";
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" +
         fmt(kTop + ph) + "\"/>\n";
  svg += "</g>\n<g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    svg += "<line x1=\"" + fmt(sx(fx)) + "\" y1=\"" + fmt(kTop + ph) + "\" x2=\"" + fmt(sx(fx)) + "\" y2=\"" +
           fmt(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(sx(fx)) + "\" y=\"" + fmt(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
           escape(format_number(fx)) + "</text>\n";
    svg += "<line x1=\"" + fmt(kLeft - 5) + "\" y1=\"" + fmt(sy(fy)) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" +
           fmt(sy(fy)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(sy(fy) + 4) + "\" text-anchor=\"end\">" +
           escape(format_number(fy)) + "</text>\n";
  }
  svg += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kHeight - 10) + "\" text-anchor=\"middle\">" +
         escape(series.front().x_label) + "</text>\n";
  svg += "</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % kColors.size()];
    if (s.has_errors()) {
      std::string band;
      for (const auto& p : s.points) band += fmt(sx(p.x)) + "," + fmt(sy(p.y + p.y_err.value_or(0.0))) + " ";
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it) {
        band += fmt(sx(it->x)) + "," + fmt(sy(it->y - it->y_err.value_or(0.0))) + " ";
      }
      band.pop_back();
      svg += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string line;
    for (const auto& p : s.points) line += fmt(sx(p.x)) + "," + fmt(sy(p.y)) + " ";
    line.pop_back();
    svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    svg += "<g class=\"legend\"><line x1=\"" + fmt(kLeft + pw + 15) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
           fmt(kLeft + pw + 35) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>" +
           "<text x=\"" + fmt(kLeft + pw + 40) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(s.name) + "</text></g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void render_plot(std::span<const MetricSeries> series, const std::filesystem::path& path,
                 const std::string& title) {
  write_text_file(path, plot_svg(series, title));
}

}  // namespace crlab::store
