#include "sim/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "common/error.hpp"
#include "common/hash.hpp"

namespace crlab::sim {

std::string_view task_name(TaskKind kind) {
  return kind == TaskKind::kTargetReaching ? "reach" : "circle";
}

TaskKind parse_task(std::string_view name) {
  if (name == "reach" || name == "0" || name == "TargetReaching") return TaskKind::kTargetReaching;
  if (name == "circle" || name == "1" || name == "TargetCircling") return TaskKind::kTargetCircling;
  throw_config("unknown task '" + std::string(name) + "' (expected reach or circle)");
}

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

TaskSpec TaskSpec::defaults(TaskKind kind) {
  TaskSpec t;
  t.kind = kind;
  if (kind == TaskKind::kTargetCircling) t.target_color = Rgb{30, 40, 230};
  return t;
}

void TaskSpec::validate() const {
  const double h = arena_half_extent;
  auto fail = [](const std::string& key, const std::string& why) {
    throw_config("invalid task spec: " + key + " " + why);
  };
  if (!(h > 0.0)) fail("arena_half_extent", "must be positive");
  if (!(step_size > 0.0 && step_size < h)) fail("step_size", "must lie in (0, arena_half_extent)");
  if (!(contact_radius > 0.0 && contact_radius < h)) fail("contact_radius", "must lie in (0, arena_half_extent)");
  if (!(circle_radius > 0.0 && circle_radius < h)) fail("circle_radius", "must lie in (0, arena_half_extent)");
  if (!(robot_half_size > 0.0 && robot_half_size < h)) fail("robot_half_size", "must lie in (0, arena_half_extent)");
  if (!(robot_render_half_size >= robot_half_size && robot_render_half_size < h)) {
    fail("robot_render_half_size", "must lie in [robot_half_size, arena_half_extent)");
  }
  if (!(tag_half_size > robot_render_half_size && tag_half_size < h)) {
    fail("tag_half_size", "must lie in (robot_render_half_size, arena_half_extent)");
  }
  if (movement_window < 1) fail("movement_window", "must be >= 1");
  if (kind == TaskKind::kTargetCircling && lambda != 10.0) fail("lambda", "must be 10 for the circling task");
  if (!(lambda > 0.0)) fail("lambda", "must be positive");
  if (max_steps != 250) fail("max_steps", "must be 250");
  if (image_size < 8) fail("image_size", "must be >= 8");
  if (target_color == robot_color) fail("target_color", "must differ from robot_color");
  if (kind == TaskKind::kTargetReaching && 4.0 * contact_radius >= 2.0 * tag_limit()) {
    fail("contact_radius", "too large to place a separated target");
  }
}

void RandomizationSpec::validate() const {
  if (background_min > background_max) throw_config("randomization: background_min > background_max");
  if (!(luminosity_min >= 0.5 && luminosity_max <= 1.5 && luminosity_min <= luminosity_max)) {
    throw_config("randomization: luminosity range must lie within [0.5, 1.5]");
  }
}

namespace {

double clamp_coord(double v, double limit) { return std::clamp(v, -limit, limit); }

Env::Transition advance(WorldState& s, Action action, const TaskSpec& task) {
  if (s.step_index >= task.max_steps) throw_usage("step called on a finished episode");
  Vec2 moved = s.robot;
  switch (action) {
    case Action::kLeft: moved.x -= task.step_size; break;
    case Action::kRight: moved.x += task.step_size; break;
    case Action::kUp: moved.y += task.step_size; break;
    case Action::kDown: moved.y -= task.step_size; break;
    default: throw_usage("invalid action " + std::to_string(static_cast<int>(action)));
  }
  const double limit = task.robot_limit();
  const Vec2 clamped{clamp_coord(moved.x, limit), clamp_coord(moved.y, limit)};
  s.bumped = !(clamped == moved);
  s.robot = clamped;
  s.pos_history.erase(s.pos_history.begin());
  s.pos_history.push_back(clamped);
  s.step_index += 1;
  s.contact = norm(s.robot - s.target) <= task.contact_radius;

  Env::Transition t;
  t.reward = reward(s, task);
  t.done = s.step_index >= task.max_steps;
  t.bump = s.bumped;
  t.contact = s.contact;
  return t;
}

void fill_rect(Observation& img, const TaskSpec& task, Vec2 center, double half, Rgb color) {
  const int n = task.image_size;
  const double h = task.arena_half_extent;
  const double px = 2.0 * h / n;
  // Pixel j covers centre x = -h + (j + 0.5) px; row i covers y = h - (i + 0.5) px.
  const int j0 = std::max(0, static_cast<int>(std::ceil((center.x - half + h) / px - 0.5)));
  const int j1 = std::min(n - 1, static_cast<int>(std::floor((center.x + half + h) / px - 0.5)));
  const int i0 = std::max(0, static_cast<int>(std::ceil((h - center.y - half) / px - 0.5)));
  const int i1 = std::min(n - 1, static_cast<int>(std::floor((h - center.y + half) / px - 0.5)));
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(i) * n + j) * 3];
      p[0] = color.r;
      p[1] = color.g;
      p[2] = color.b;
    }
  }
}

}  // namespace

ResetResult reset(const TaskSpec& task, std::uint64_t seed) {
  task.validate();
  Rng rng(derive_seed(seed, "reset"));
  WorldState s;
  const double lr = task.robot_limit();
  s.robot = {rng.uniform(-lr, lr), rng.uniform(-lr, lr)};
  if (task.kind == TaskKind::kTargetCircling) {
    s.target = {0.0, 0.0};
  } else {
    const double lt = task.tag_limit();
    do {
      s.target = {rng.uniform(-lt, lt), rng.uniform(-lt, lt)};
    } while (norm(s.robot - s.target) < 2.0 * task.contact_radius);
  }
  s.pos_history.assign(static_cast<std::size_t>(task.movement_window) + 1, s.robot);
  s.step_index = 0;
  s.bumped = false;
  s.contact = norm(s.robot - s.target) <= task.contact_radius;
  s.rng = Rng(derive_seed(seed, "render"));
  ResetResult out;
  out.observation = render(s, task, RenderParams{});
  out.state = std::move(s);
  return out;
}

StepResult step(const WorldState& state, Action action, const TaskSpec& task,
                const RenderParams& render_params) {
  StepResult out;
  out.next_state = state;
  const Env::Transition t = advance(out.next_state, action, task);
  out.reward = t.reward;
  out.done = t.done;
  out.bump = t.bump;
  out.contact = t.contact;
  out.observation = render(out.next_state, task, render_params);
  return out;
}

double reward_reach(const WorldState& state, const TaskSpec& task) {
  double r = 0.0;
  if (norm(state.robot - state.target) <= task.contact_radius) r += 1.0;
  if (state.bumped) r -= 1.0;
  return r;
}

double reward_circle(const WorldState& state, const TaskSpec& task) {
  const double lambda = task.lambda;
  const Vec2 z = state.relative();
  const Vec2 z_past = state.oldest() - state.target;
  const double off = norm(z) - task.circle_radius;
  const double circle = 1.0 - lambda * off * off;
  const Vec2 d = z - z_past;
  const double movement = d.x * d.x + d.y * d.y;
  const double bump = state.bumped ? -1.0 : 0.0;
  return lambda * circle * movement + lambda * lambda * bump;
}

double reward(const WorldState& state, const TaskSpec& task) {
  return task.kind == TaskKind::kTargetReaching ? reward_reach(state, task)
                                                : reward_circle(state, task);
}

std::uint8_t scale_channel(std::uint8_t v, double factor) {
  const long scaled = std::lround(static_cast<double>(v) * factor);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0L, 255L));
}

Observation render(const WorldState& state, const TaskSpec& task, const RenderParams& params) {
  const int n = task.image_size;
  Observation img;
  img.height = n;
  img.width = n;
  img.pixels.resize(static_cast<std::size_t>(n) * n * 3);
  for (std::size_t p = 0; p < img.pixels.size(); p += 3) {
    img.pixels[p] = params.background.r;
    img.pixels[p + 1] = params.background.g;
    img.pixels[p + 2] = params.background.b;
  }
  const int border = std::max(1, n / 32);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i < border || j < border || i >= n - border || j >= n - border) {
        std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(i) * n + j) * 3];
        p[0] = task.border_color.r;
        p[1] = task.border_color.g;
        p[2] = task.border_color.b;
      }
    }
  }
  fill_rect(img, task, state.target, task.tag_half_size, task.target_color);
  fill_rect(img, task, state.robot, task.robot_render_half_size, task.robot_color);
  if (params.luminosity_scale != 1.0) {
    std::array<std::uint8_t, 256> lut;
    for (int v = 0; v < 256; ++v) lut[v] = scale_channel(static_cast<std::uint8_t>(v), params.luminosity_scale);
    for (auto& p : img.pixels) p = lut[p];
  }
  return img;
}

RenderParams sample_randomization(const RandomizationSpec& spec, Rng& rng) {
  if (!spec.enabled) return RenderParams{};
  RenderParams p;
  const std::uint64_t span = static_cast<std::uint64_t>(spec.background_max - spec.background_min) + 1;
  p.background.r = static_cast<std::uint8_t>(spec.background_min + rng.below(span));
  p.background.g = static_cast<std::uint8_t>(spec.background_min + rng.below(span));
  p.background.b = static_cast<std::uint8_t>(spec.background_min + rng.below(span));
  p.luminosity_scale = rng.uniform(spec.luminosity_min, spec.luminosity_max);
  return p;
}

Env::Env(TaskSpec task, RandomizationSpec randomization)
    : task_(std::move(task)), randomization_(randomization) {
  task_.validate();
  randomization_.validate();
}

RenderParams Env::next_render_params() {
  return sample_randomization(randomization_, state_.rng);
}

const Observation& Env::reset(std::uint64_t seed) {
  ResetResult r = sim::reset(task_, seed);
  state_ = std::move(r.state);
  if (randomization_.enabled) {
    observation_ = render(state_, task_, next_render_params());
  } else {
    observation_ = std::move(r.observation);
  }
  has_episode_ = true;
  return observation_;
}

Env::Transition Env::step(Action action) {
  if (!has_episode_) throw_usage("step called before reset");
  const Transition t = advance(state_, action, task_);
  observation_ = render(state_, task_, next_render_params());
  return t;
}

}  // namespace crlab::sim
