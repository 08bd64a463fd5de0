#pragma once

#include <functional>
#include <string>

#include "nn/loss.hpp"

namespace crlab::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

// Relative error with a floor on the denominator so that gradients that are
// numerically zero are compared absolutely: |a - n| / max(|a|, |n|, floor).
inline constexpr double kRelativeErrorFloor = 1e-3;
double relative_error(double analytic, double numeric);

using LossFn = std::function<double(const ParamSet&)>;

// Central differences over every parameter of `params`, compared against
// `analytic` (same names and shapes).
GradCheckReport finite_diff_check(const ParamSet& params, const LossFn& loss,
                                  const ParamSet& analytic, double h, double tol);

// Convenience form for a single network and one of the built-in losses.
GradCheckReport finite_diff_check(const ParamSet& params, const NetworkSpec& spec,
                                  const Matrix& input, LossKind kind, const LossTargets& targets,
                                  double h, double tol);

}  // namespace crlab::nn
