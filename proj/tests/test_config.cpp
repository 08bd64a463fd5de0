#include <doctest.h>

#include "app/config.hpp"
#include "common/binio.hpp"
#include "support.hpp"

using namespace crlab;
using namespace crlab::app;

namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    return e.what();
  }
  FAIL("expected a config error");
  return {};
}

}  // namespace

TEST_CASE("empty text gives the defaults") {
  const RunConfig c = parse_config("");
  CHECK(c.task_kinds.size() == 2);
  CHECK(c.geometry.step_size == 0.05);
  CHECK(c.geometry.lambda == 10.0);
  CHECK(c.geometry.max_steps == 250);
  CHECK(c.scenario.srl.state_dim == 32);
  CHECK(c.scenario.ppo.gamma == 0.99);
  CHECK(c.scenario.ppo.total_timesteps == 200000);
  CHECK(c.scenario.student.hidden == std::vector<int>{256, 128});
  CHECK(c.scenario.generation.size_cap == 10000);
  CHECK(c.scenario.n_eval == 5);
  CHECK(config_snapshot(c) == config_snapshot(RunConfig{}));
}

TEST_CASE("values, comments and snapshot round trip") {
  const RunConfig c = parse_config(
      "# comment\n"
      "seed = 42\n"
      "tasks = circle, reach\n"
      "ppo.hidden = 32, 32   # trailing comment\n"
      "srl.activation = tanh\n"
      "distill.stochastic = true\n");
  CHECK(c.scenario.seed == 42);
  CHECK(c.task_kinds == std::vector<sim::TaskKind>{sim::TaskKind::kTargetCircling, sim::TaskKind::kTargetReaching});
  CHECK(c.scenario.ppo.hidden == std::vector<int>{32, 32});
  CHECK(c.scenario.srl.activation == nn::Activation::kTanh);
  CHECK(c.scenario.generation.stochastic);
  const std::string snap = config_snapshot(c);
  CHECK(config_snapshot(parse_config(snap)) == snap);
  for (const auto& key : config_keys()) CHECK(snap.find(key + " = ") != std::string::npos);
}

TEST_CASE("errors name the key and line") {
  CHECK(message_of("seed = 1\nbogus = 2\n").find(":2:") != std::string::npos);
  CHECK(message_of("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
  CHECK(message_of("max_steps = -3\n").find("max_steps") != std::string::npos);
  CHECK(message_of("lambda = 5\n").find("lambda") != std::string::npos);
  CHECK(message_of("ppo.gamma = 1.5\n").find("gamma") != std::string::npos);
  CHECK(message_of("seed = abc\n").find("seed") != std::string::npos);
  CHECK(message_of("tasks = reach\n").find("task") != std::string::npos);
  CHECK(message_of("no equals sign\n").find(":1:") != std::string::npos);
  CHECK(message_of("ppo.checkpoint_interval = 3000\n").find("checkpoint") != std::string::npos);
}

TEST_CASE("files") {
  const auto dir = test::scratch_dir("config");
  write_text_file(dir / "a.cfg", "seed = 9\n");
  CHECK(load_config(dir / "a.cfg").scenario.seed == 9);
  CHECK(test::error_kind_of([&] { load_config(dir / "missing.cfg"); }) == ErrorKind::kConfig);
}
