#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "common/rng.hpp"

namespace crlab::sim {

enum class TaskKind : std::uint8_t { kTargetReaching = 0, kTargetCircling = 1 };

std::string_view task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);  // "reach" / "circle" (config error otherwise)

enum class Action : std::uint8_t { kLeft = 0, kRight = 1, kUp = 2, kDown = 3 };
inline constexpr int kNumActions = 4;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Vec2 {
  double x = 0.0, y = 0.0;
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
double norm(Vec2 v);

// Geometry, reward shaping and rendering constants of one task.
struct TaskSpec {
  TaskKind kind = TaskKind::kTargetReaching;
  double arena_half_extent = 1.0;
  double step_size = 0.05;
  double contact_radius = 0.1;
  double circle_radius = 0.5;
  // Collision extent; the robot is drawn at robot_render_half_size.
  double robot_half_size = 0.05;
  double robot_render_half_size = 0.1;
  // Drawn larger than the robot so the tag stays visible under it.
  double tag_half_size = 0.15;
  int movement_window = 10;
  double lambda = 10.0;
  int max_steps = 250;
  int image_size = 64;
  Rgb target_color{230, 30, 30};
  Rgb robot_color{15, 15, 15};
  Rgb border_color{170, 20, 20};

  static TaskSpec defaults(TaskKind kind);
  // Throws a config error naming the first violated invariant.
  void validate() const;

  double robot_limit() const { return arena_half_extent - robot_half_size; }
  double tag_limit() const { return arena_half_extent - tag_half_size; }
};

struct RenderParams {
  Rgb background{128, 128, 128};
  double luminosity_scale = 1.0;

  bool operator==(const RenderParams&) const = default;
};

struct RandomizationSpec {
  bool enabled = false;
  // Background channels are drawn independently from [background_min, background_max].
  std::uint8_t background_min = 70;
  std::uint8_t background_max = 190;
  double luminosity_min = 0.7;
  double luminosity_max = 1.3;

  void validate() const;
};

struct WorldState {
  Vec2 robot;
  Vec2 target;
  // Last k+1 robot positions, oldest first; back() == robot.
  std::vector<Vec2> pos_history;
  int step_index = 0;
  bool bumped = false;
  bool contact = false;
  // Drives domain randomization draws for this episode.
  Rng rng;

  // z_t: robot position relative to the target.
  Vec2 relative() const { return robot - target; }
  Vec2 oldest() const { return pos_history.front(); }
};

struct Observation {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved

  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Observation&) const = default;
};

struct StepResult {
  WorldState next_state;
  double reward = 0.0;
  bool done = false;
  Observation observation;
  bool bump = false;
  bool contact = false;
};

struct ResetResult {
  WorldState state;
  Observation observation;
};

ResetResult reset(const TaskSpec& task, std::uint64_t seed);
StepResult step(const WorldState& state, Action action, const TaskSpec& task,
                const RenderParams& render);

double reward_reach(const WorldState& state, const TaskSpec& task);
double reward_circle(const WorldState& state, const TaskSpec& task);
double reward(const WorldState& state, const TaskSpec& task);

Observation render(const WorldState& state, const TaskSpec& task, const RenderParams& params);

// Pixel-wise luminosity scaling with rounding and clamping to [0, 255].
std::uint8_t scale_channel(std::uint8_t v, double factor);

RenderParams sample_randomization(const RandomizationSpec& spec, Rng& rng);

// Stateful wrapper used by data collection and training loops. Each instance
// owns its state and RNG; instances are independent of each other.
class Env {
 public:
  Env(TaskSpec task, RandomizationSpec randomization);

  const Observation& reset(std::uint64_t seed);

  struct Transition {
    double reward = 0.0;
    bool done = false;
    bool bump = false;
    bool contact = false;
  };
  // Advances in place and re-renders. Usage error once the episode is done.
  Transition step(Action action);

  const TaskSpec& task() const { return task_; }
  const WorldState& state() const { return state_; }
  const Observation& observation() const { return observation_; }
  bool done() const { return state_.step_index >= task_.max_steps; }

 private:
  RenderParams next_render_params();

  TaskSpec task_;
  RandomizationSpec randomization_;
  WorldState state_;
  Observation observation_;
  bool has_episode_ = false;
};

}  // namespace crlab::sim
