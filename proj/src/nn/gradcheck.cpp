#include "nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace crlab::nn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const ParamSet& params, const LossFn& loss,
                                  const ParamSet& analytic, double h, double tol) {
  if (!(h > 0.0)) throw_usage("finite_diff_check: step h must be positive");
  params.check_aligned(analytic, "finite_diff_check");
  GradCheckReport report;
  report.tolerance = tol;
  ParamSet probe = params;
  auto probe_entries = probe.entries();
  auto analytic_entries = analytic.entries();
  for (std::size_t e = 0; e < probe_entries.size(); ++e) {
    auto& values = probe_entries[e].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss(probe);
      values[i] = saved - h;
      const double down = loss(probe);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic_entries[e].values[i], numeric);
      ++report.checked;
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = probe_entries[e].name;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

GradCheckReport finite_diff_check(const ParamSet& params, const NetworkSpec& spec,
                                  const Matrix& input, LossKind kind, const LossTargets& targets,
                                  double h, double tol) {
  const ParamSet net_params = params.subset(spec.prefix + ".");
  const Gradients g = backward(net_params, spec, input, kind, targets);
  auto fn = [&](const ParamSet& p) { return loss_value(p, spec, input, kind, targets); };
  return finite_diff_check(net_params, fn, g.grads, h, tol);
}

}  // namespace crlab::nn
