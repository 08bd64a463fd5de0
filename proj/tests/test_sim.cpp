#include <doctest.h>

#include <cmath>

#include "sim/env.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crlab;
using namespace crlab::sim;

namespace {

WorldState make_state(const TaskSpec& task, Vec2 robot, Vec2 target, Vec2 oldest, bool bumped) {
  WorldState s;
  s.robot = robot;
  s.target = target;
  s.pos_history.assign(static_cast<std::size_t>(task.movement_window) + 1, oldest);
  s.pos_history.back() = robot;
  s.bumped = bumped;
  return s;
}

}  // namespace

TEST_CASE("circling reward hand cases") {
  const TaskSpec task = TaskSpec::defaults(TaskKind::kTargetCircling);
  CHECK(reward_circle(make_state(task, {0.5, 0}, {0, 0}, {0, 0.5}, false), task) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(reward_circle(make_state(task, {0.3, 0.2}, {0, 0}, {0.3, 0.2}, false), task) == 0.0);
  CHECK(reward_circle(make_state(task, {0.5, 0}, {0, 0}, {0, 0.5}, true), task) == doctest::Approx(-95.0).epsilon(1e-15));
}

TEST_CASE("circling reward matches the oracle on random states") {
  const TaskSpec task = TaskSpec::defaults(TaskKind::kTargetCircling);
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec2 robot{rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95)};
    const Vec2 oldest{rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95)};
    const bool bump = rng.below(4) == 0;
    const double got = reward_circle(make_state(task, robot, {0, 0}, oldest, bump), task);
    const double want = oracle::circle_reward(robot.x, robot.y, oldest.x, oldest.y, bump, task.lambda, task.circle_radius);
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("reaching reward") {
  const TaskSpec task = TaskSpec::defaults(TaskKind::kTargetReaching);
  CHECK(reward_reach(make_state(task, {0.05, 0}, {0, 0}, {0, 0}, false), task) == 1.0);
  CHECK(reward_reach(make_state(task, {0.5, 0}, {0, 0}, {0, 0}, true), task) == -1.0);
  CHECK(reward_reach(make_state(task, {0.5, 0}, {0, 0}, {0, 0}, false), task) == 0.0);
}

TEST_CASE("step translates and clamps") {
  const TaskSpec task = TaskSpec::defaults(TaskKind::kTargetReaching);
  const StepResult a = step(make_state(task, {0, 0}, {0.5, 0.5}, {0, 0}, false), Action::kRight, task, {});
  CHECK(a.next_state.robot.x == doctest::Approx(0.05));
  CHECK(a.next_state.robot.y == 0.0);
  CHECK_FALSE(a.bump);
  const StepResult b = step(make_state(task, {0.94, 0}, {0.5, 0.5}, {0.94, 0}, false), Action::kRight, task, {});
  CHECK(b.next_state.robot.x == doctest::Approx(0.95));
  CHECK(b.bump);
  CHECK(b.reward == -1.0);
}

TEST_CASE("episodes last max_steps and stay inside the box") {
  for (TaskKind kind : {TaskKind::kTargetReaching, TaskKind::kTargetCircling}) {
    const TaskSpec task = TaskSpec::defaults(kind);
    Env env(task, RandomizationSpec{});
    env.reset(3);
    Rng rng(4);
    int steps = 0;
    bool done = false;
    while (!done) {
      const Vec2 before = env.state().robot;
      const auto action = static_cast<Action>(rng.below(4));
      const auto t = env.step(action);
      const Vec2 after = env.state().robot;
      CHECK(std::abs(after.x) <= task.robot_limit() + 1e-12);
      CHECK(std::abs(after.y) <= task.robot_limit() + 1e-12);
      const double moved = std::abs(after.x - before.x) + std::abs(after.y - before.y);
      CHECK(t.bump == (moved < task.step_size - 1e-12));
      done = t.done;
      ++steps;
    }
    CHECK(steps == task.max_steps);
    CHECK(test::error_kind_of([&] { env.step(Action::kLeft); }) == ErrorKind::kUsage);
  }
}

TEST_CASE("reset contracts") {
  const TaskSpec reach = TaskSpec::defaults(TaskKind::kTargetReaching);
  const TaskSpec circle = TaskSpec::defaults(TaskKind::kTargetCircling);
  CHECK(reset(circle, 99).state.target == Vec2{0, 0});
  const auto a = reset(reach, 5);
  const auto b = reset(reach, 5);
  CHECK(a.state.robot == b.state.robot);
  CHECK(a.observation == b.observation);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto r = reset(reach, s);
    CHECK(norm(r.state.relative()) >= 2 * reach.contact_radius);
  }
}

TEST_CASE("rendering") {
  const TaskSpec reach = TaskSpec::defaults(TaskKind::kTargetReaching);
  TaskSpec circle = TaskSpec::defaults(TaskKind::kTargetCircling);
  const WorldState s = make_state(reach, {-0.5, -0.5}, {0.5, 0.5}, {-0.5, -0.5}, false);
  const Observation o = render(s, reach, {});
  const int c = o.width / 2;
  CHECK(o.at(c, c, 0) == 128);
  CHECK(o.at(c, c, 1) == 128);
  CHECK(render(s, reach, {}) == o);

  const Observation oc = render(s, circle, {});
  int differing = 0;
  for (std::size_t i = 0; i < o.pixels.size(); ++i) differing += o.pixels[i] != oc.pixels[i];
  CHECK(differing > 0);

  const Observation dim = render(s, reach, {{128, 128, 128}, 0.7});
  for (std::size_t i = 0; i < o.pixels.size(); ++i) {
    CHECK(dim.pixels[i] == static_cast<int>(std::min(255.0, std::round(o.pixels[i] * 0.7))));
  }
  CHECK(scale_channel(200, 1.3) == 255);
  CHECK(scale_channel(100, 1.0) == 100);
}

TEST_CASE("randomization draws") {
  RandomizationSpec spec;
  spec.enabled = true;
  Rng a(8), b(8);
  CHECK(sample_randomization(spec, a) == sample_randomization(spec, b));
  Rng rng(1);
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const RenderParams p = sample_randomization(spec, rng);
    CHECK(p.luminosity_scale >= 0.7);
    CHECK(p.luminosity_scale <= 1.3);
    total += p.luminosity_scale;
  }
  CHECK(std::abs(total / 10000 - 1.0) < 0.02);
  spec.enabled = false;
  CHECK(sample_randomization(spec, rng) == RenderParams{});
}

TEST_CASE("task spec invariants") {
  TaskSpec t = TaskSpec::defaults(TaskKind::kTargetCircling);
  t.max_steps = -3;
  CHECK(test::error_kind_of([&] { t.validate(); }) == ErrorKind::kConfig);
  t = TaskSpec::defaults(TaskKind::kTargetCircling);
  t.lambda = 0.0;
  CHECK(test::error_kind_of([&] { t.validate(); }) == ErrorKind::kConfig);
  CHECK(test::error_kind_of([] { parse_task("swim"); }) == ErrorKind::kConfig);
}
