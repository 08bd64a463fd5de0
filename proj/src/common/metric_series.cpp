#include "common/metric_series.hpp"

#include <cmath>

#include "common/error.hpp"

namespace crlab {

void MetricSeries::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || (p.y_err && !std::isfinite(*p.y_err))) {
      throw_usage("series '" + name + "': non-finite value at point " + std::to_string(i));
    }
    if (i > 0 && !(p.x > points[i - 1].x)) {
      throw_usage("series '" + name + "': x not strictly increasing at point " + std::to_string(i));
    }
  }
}

}  // namespace crlab
