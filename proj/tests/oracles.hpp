#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sim/env.hpp"

// Independent reference implementations used by the tests.
namespace crlab::oracle {

// Circling reward written out from its definition.
inline double circle_reward(double zx, double zy, double ox, double oy, bool bump, double lambda, double r) {
  const double dist = std::sqrt(zx * zx + zy * zy);
  const double r_radius = 1.0 - lambda * (dist - r) * (dist - r);
  const double mx = zx - ox, my = zy - oy;
  const double r_movement = mx * mx + my * my;
  const double r_bump = bump ? -1.0 : 0.0;
  return lambda * r_radius * r_movement + lambda * lambda * r_bump;
}

// A_t = sum_l (gamma lambda)^l delta_{t+l}, truncated at the first episode
// end at or after t.
inline std::vector<double> gae(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& d, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t j = t; j < n; ++j) {
      const double next = d[j] ? 0.0 : v[j + 1];
      out[t] += weight * (r[j] + gamma * next - v[j]);
      if (d[j]) break;
      weight *= gamma * lambda;
    }
  }
  return out;
}

// Scripted policy with access to the true state. Reaching: the move that
// lands closest to the target. Circling: tangential motion with a radial
// correction towards the circle.
inline int expert_action(const sim::WorldState& s, const sim::TaskSpec& t) {
  const double dx[4] = {-1, 1, 0, 0}, dy[4] = {0, 0, 1, -1};
  if (t.kind == sim::TaskKind::kTargetReaching) {
    int best = 0;
    double best_d = 1e9;
    for (int a = 0; a < 4; ++a) {
      const double x = std::clamp(s.robot.x + dx[a] * t.step_size, -t.robot_limit(), t.robot_limit());
      const double y = std::clamp(s.robot.y + dy[a] * t.step_size, -t.robot_limit(), t.robot_limit());
      const double d = std::hypot(x - s.target.x, y - s.target.y);
      if (d < best_d - 1e-12) {
        best_d = d;
        best = a;
      }
    }
    return best;
  }
  const sim::Vec2 z = s.relative();
  const double n = std::max(1e-9, std::hypot(z.x, z.y));
  const double k = 4.0 * (t.circle_radius - n);
  const double vx = -z.y / n + k * z.x / n, vy = z.x / n + k * z.y / n;
  int best = 0;
  double best_v = -1e9;
  for (int a = 0; a < 4; ++a) {
    const double v = dx[a] * vx + dy[a] * vy;
    if (v > best_v) {
      best_v = v;
      best = a;
    }
  }
  return best;
}

}  // namespace crlab::oracle
