#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ppo/ppo.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crlab;
using namespace crlab::ppo;

namespace {

RolloutBuffer synthetic_buffer(const PolicyNet& policy, int n, int favoured, Rng& rng) {
  RolloutBuffer b;
  b.features = nn::Matrix(n, policy.feature_dim());
  for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = rng.uniform(-1.0, 1.0);
  const nn::Matrix logp = nn::log_softmax_rows(policy.action_logits(b.features));
  for (int i = 0; i < n; ++i) {
    const int a = static_cast<int>(rng.below(4));
    b.actions.push_back(a);
    b.log_probs.push_back(logp(i, a));
    b.advantages.push_back(a == favoured ? 1.0 : -1.0);
    b.returns.push_back(0.0);
    b.values.push_back(0.0);
    b.rewards.push_back(0.0);
    b.dones.push_back(0);
  }
  return b;
}

}  // namespace

TEST_CASE("gae hand cases") {
  const std::vector<double> r1{1.0}, v1{0.0, 0.0};
  const std::vector<std::uint8_t> d1{0};
  CHECK(gae(r1, v1, d1, 0.99, 0.95).advantages[0] == doctest::Approx(1.0));
  const std::vector<double> r2{0.0, 1.0}, v2{0.0, 0.0, 0.0};
  const std::vector<std::uint8_t> d2{0, 0};
  const auto g = gae(r2, v2, d2, 0.99, 0.95);
  CHECK(g.advantages[0] == doctest::Approx(0.9405).epsilon(1e-12));
  CHECK(g.advantages[1] == doctest::Approx(1.0));

  // An episode end cuts the dependence on later steps.
  std::vector<double> r3{0.3, 0.5, 7.0}, v3{0.1, 0.2, 9.0, 4.0};
  const std::vector<std::uint8_t> d3{0, 1, 0};
  const double a0 = gae(r3, v3, d3, 0.99, 0.95).advantages[1];
  r3[2] = -50.0;
  v3[2] = -3.0;
  v3[3] = 11.0;
  CHECK(gae(r3, v3, d3, 0.99, 0.95).advantages[1] == a0);
  CHECK(test::error_kind_of([&] { gae(r1, v2, d1, 0.99, 0.95); }) == ErrorKind::kUsage);
}

TEST_CASE("gae matches the explicit sum") {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> r(n), v(n + 1);
    std::vector<std::uint8_t> d(n);
    for (auto& x : r) x = rng.uniform(-2.0, 2.0);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    for (auto& x : d) x = rng.below(4) == 0;
    const double gamma = rng.uniform(0.8, 1.0), lambda = rng.uniform(0.0, 1.0);
    const auto got = gae(r, v, d, gamma, lambda);
    const auto want = oracle::gae(r, v, d, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      worst = std::max(worst, std::abs(got.advantages[t] - want[t]));
      CHECK(got.returns[t] == doctest::Approx(got.advantages[t] + v[t]));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("advantage normalization") {
  Rng rng(9);
  std::vector<double> a(257);
  for (auto& x : a) x = rng.uniform(-3.0, 10.0);
  normalize_advantages(a);
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  var /= a.size();
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(var - 1.0) < 1e-6);
  std::vector<double> one{4.0};
  normalize_advantages(one);
  CHECK(one[0] == 4.0);
}

TEST_CASE("argmax ties resolve to the lowest index") {
  const std::vector<double> v{0.25, 0.25, 0.25, 0.25};
  CHECK(argmax_lowest(std::span<const double>(v)) == 0);
  const std::vector<double> w{0.1, 0.4, 0.4, 0.1};
  CHECK(argmax_lowest(std::span<const double>(w)) == 1);
}

TEST_CASE("update with zero advantages and no entropy leaves the actor unchanged") {
  Rng rng(1);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  PolicyNet policy = PolicyNet::create(6, cfg, rng);
  RolloutBuffer b = synthetic_buffer(policy, 40, 0, rng);
  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  for (auto& r : b.returns) r = 1.0;
  const nn::ParamSet actor_before = policy.params.subset("actor.");
  const nn::ParamSet critic_before = policy.params.subset("critic.");
  nn::OptState opt = make_optimizer(policy, cfg);
  ppo_update(policy, opt, b, cfg, rng);
  CHECK(policy.params.subset("actor.") == actor_before);
  CHECK_FALSE(policy.params.subset("critic.") == critic_before);
}

TEST_CASE("update raises the probability of the favoured action") {
  Rng rng(2);
  PpoConfig cfg;
  PolicyNet policy = PolicyNet::create(6, cfg, rng);
  const RolloutBuffer b = synthetic_buffer(policy, 128, 2, rng);
  const double before = nn::softmax_rows(policy.action_logits(b.features)).col(2).mean();
  nn::OptState opt = make_optimizer(policy, cfg);
  const UpdateMetrics m = ppo_update(policy, opt, b, cfg, rng);
  const double after = nn::softmax_rows(policy.action_logits(b.features)).col(2).mean();
  CHECK(after > before);
  CHECK(m.minibatches == cfg.epochs * 2);
  for (const auto& e : policy.params.entries()) {
    for (double v : e.values) CHECK(std::isfinite(v));
  }
  RolloutBuffer empty;
  CHECK(test::error_kind_of([&] { ppo_update(policy, opt, empty, cfg, rng); }) == ErrorKind::kUsage);
}

TEST_CASE("training emits checkpoints and is deterministic") {
  const sim::TaskSpec task = sim::TaskSpec::defaults(sim::TaskKind::kTargetReaching);
  FeatureMap features{2, [](const sim::Env& env) {
                        const auto z = env.state().relative();
                        return std::vector<double>{z.x, z.y};
                      }};
  PpoConfig cfg;
  cfg.total_timesteps = 2000;
  cfg.horizon = 250;
  cfg.checkpoint_interval = 500;
  const auto a = train_task(sim::Env(task, {}), features, cfg, 17);
  const auto b = train_task(sim::Env(task, {}), features, cfg, 17);
  REQUIRE(a.checkpoints.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.checkpoints[i].timesteps == static_cast<std::int64_t>(500 * (i + 1)));
    CHECK(a.checkpoints[i].policy.params == b.checkpoints[i].policy.params);
  }
  CHECK(a.teacher.params == b.teacher.params);
  CHECK(a.reward_curve == b.reward_curve);
  CHECK(a.reward_curve.points.size() > 1);

  cfg.checkpoint_interval = 300;
  CHECK(test::error_kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
}
