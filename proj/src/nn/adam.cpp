#include "nn/adam.hpp"

#include <cmath>

#include "common/error.hpp"

namespace crlab::nn {

OptState make_opt_state(const ParamSet& params, AdamConfig config) {
  OptState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.config = config;
  return s;
}

void opt_step_inplace(ParamSet& params, const ParamSet& grads, OptState& opt) {
  params.check_aligned(grads, "opt_step(grads)");
  params.check_aligned(opt.first_moment, "opt_step(first moment)");
  params.check_aligned(opt.second_moment, "opt_step(second moment)");
  for (const auto& g : grads.entries()) {
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      if (!std::isfinite(g.values[i])) {
        throw_numeric("non-finite gradient in parameter '" + g.name + "' at index " + std::to_string(i));
      }
    }
  }
  const AdamConfig& c = opt.config;
  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  auto p_entries = params.entries();
  auto m_entries = opt.first_moment.entries();
  auto v_entries = opt.second_moment.entries();
  auto g_entries = grads.entries();
  for (std::size_t e = 0; e < p_entries.size(); ++e) {
    auto& p = p_entries[e].values;
    auto& m = m_entries[e].values;
    auto& v = v_entries[e].values;
    const auto& g = g_entries[e].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
  params.version += 1;
}

std::pair<ParamSet, OptState> opt_step(const ParamSet& params, const ParamSet& grads,
                                       const OptState& opt) {
  std::pair<ParamSet, OptState> out{params, opt};
  opt_step_inplace(out.first, grads, out.second);
  return out;
}

double clip_grad_norm(ParamSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& e : grads.entries()) {
    for (double v : e.values) sq += v * v;
  }
  const double total = std::sqrt(sq);
  if (max_norm > 0.0 && total > max_norm) {
    const double scale = max_norm / (total + 1e-6);
    for (auto& e : grads.entries()) {
      for (double& v : e.values) v *= scale;
    }
  }
  return total;
}

}  // namespace crlab::nn
