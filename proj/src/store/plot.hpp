#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "common/metric_series.hpp"

namespace crlab::store {

// Standalone SVG: axes with ticks, one polyline per series, a shaded band of
// +-y_err where present, and a legend. Deterministic output.
std::string plot_svg(std::span<const MetricSeries> series, const std::string& title = "");
void render_plot(std::span<const MetricSeries> series, const std::filesystem::path& path,
                 const std::string& title = "");

}  // namespace crlab::store
