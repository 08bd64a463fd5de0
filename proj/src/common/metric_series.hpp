#pragma once

#include <optional>
#include <string>
#include <vector>

namespace crlab {

struct MetricPoint {
  double x = 0.0;
  double y = 0.0;
  std::optional<double> y_err;

  bool operator==(const MetricPoint&) const = default;
};

// Ordered scalar series; x strictly increasing, finite values only.
struct MetricSeries {
  std::string name;
  std::string x_label = "x";
  std::string err_label;  // column name of y_err; defaults to "<name>_err"
  std::vector<MetricPoint> points;

  bool has_errors() const {
    for (const auto& p : points) {
      if (p.y_err) return true;
    }
    return false;
  }
  // Throws a usage error on the first violated invariant.
  void validate() const;

  bool operator==(const MetricSeries&) const = default;
};

}  // namespace crlab
