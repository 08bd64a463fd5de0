#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "common/metric_series.hpp"
#include "nn/adam.hpp"
#include "nn/mlp.hpp"
#include "sim/env.hpp"
#include "srl/srl_model.hpp"

namespace crlab::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch_size = 64;
  int horizon = 2000;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 2.5e-4;
  double adam_epsilon = 1e-5;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  std::int64_t total_timesteps = 200000;
  std::int64_t checkpoint_interval = 50000;
  std::vector<int> hidden{64, 64};
  // Circling rewards are divided by lambda^2 before advantage estimation.
  bool scale_circle_reward = true;

  void validate() const;
};


// Separate actor (features -> 4 logits) and critic (features -> value) nets.
class PolicyNet {
 public:
  static PolicyNet create(int feature_dim, const PpoConfig& config, Rng& rng);
  static PolicyNet from_checkpoint(const nn::ParamSet& stored);
  nn::ParamSet to_checkpoint() const;

  int feature_dim() const { return actor.input_size(); }
  nn::Matrix action_logits(const nn::Matrix& features) const;
  nn::Matrix values(const nn::Matrix& features) const;
  std::array<double, 4> probs(std::span<const double> features) const;
  int greedy_action(std::span<const double> features) const;

  nn::ParamSet params;  // actor.*, critic.*
  nn::NetworkSpec actor;
  nn::NetworkSpec critic;
};

// Index of the largest entry; ties resolve to the lowest index.
template <typename T>
int argmax_lowest(std::span<const T> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

struct RolloutBuffer {
  nn::Matrix features;             // one row per step
  std::vector<int> actions;
  std::vector<double> log_probs;   // behaviour policy, at collection time
  std::vector<double> rewards;     // learning signal (possibly scaled)
  std::vector<double> raw_rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  double bootstrap_value = 0.0;    // V(s) after the last step
  std::vector<double> advantages;  // filled by compute_advantages
  std::vector<double> returns;
  std::vector<double> completed_episode_rewards;  // raw, episodes ending in this buffer

  std::size_t size() const { return actions.size(); }
  bool has_advantages() const { return advantages.size() == actions.size() && !actions.empty(); }
};

// Policy input computed from the environment's current observation.
struct FeatureMap {
  int dim = 0;
  std::function<std::vector<double>(const sim::Env&)> fn;

  // Frozen SRL features of the rendered observation.
  static FeatureMap from_encoder(const srl::SrlModel& encoder);
};

// Steps one environment with the stochastic policy over frozen features.
// Keeps the episode running across calls.
class RolloutCollector {
 public:
  RolloutCollector(sim::Env env, FeatureMap features, std::uint64_t seed, double reward_scale);

  RolloutBuffer collect(const PolicyNet& policy, int horizon, Rng& rng);

  const sim::Env& env() const { return env_; }

 private:
  void start_episode();

  sim::Env env_;
  FeatureMap map_;
  std::uint64_t seed_;
  double reward_scale_;
  std::uint64_t episode_ = 0;
  std::vector<double> features_;
  double episode_reward_ = 0.0;
};

RolloutBuffer collect_rollouts(const PolicyNet& policy, RolloutCollector& collector, int horizon,
                               Rng& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Backward recursion; `values` carries one bootstrap entry beyond `rewards`.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double gamma, double lambda);

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda);

// Zero mean, unit variance (in place; no-op for fewer than two entries).
void normalize_advantages(std::span<double> advantages);

struct UpdateMetrics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

// Clipped-surrogate epochs over shuffled minibatches. Requires advantages.
UpdateMetrics ppo_update(PolicyNet& policy, nn::OptState& opt, const RolloutBuffer& buffer,
                         const PpoConfig& config, Rng& rng);

nn::OptState make_optimizer(const PolicyNet& policy, const PpoConfig& config);

struct PolicyCheckpoint {
  std::int64_t timesteps = 0;
  PolicyNet policy;
};

struct TrainTaskResult {
  PolicyNet teacher;
  std::vector<PolicyCheckpoint> checkpoints;
  MetricSeries reward_curve;  // timesteps, mean and std of raw episode reward
};

using CheckpointSink = std::function<void(const PolicyCheckpoint&)>;

// Alternates rollouts and updates until config.total_timesteps. When `init`
// is given training continues from its parameters (fine-tuning). Policies
// handed out are rounded to checkpoint precision.
TrainTaskResult train_task(sim::Env env, const FeatureMap& features, const PpoConfig& config,
                           std::uint64_t seed, const PolicyNet* init = nullptr,
                           const CheckpointSink& sink = {});
TrainTaskResult train_task(sim::Env env, const srl::SrlModel& encoder, const PpoConfig& config,
                           std::uint64_t seed, const PolicyNet* init = nullptr,
                           const CheckpointSink& sink = {});

double reward_scale_for(const sim::TaskSpec& task, const PpoConfig& config);

}  // namespace crlab::ppo
