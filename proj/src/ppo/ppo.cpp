#include "ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/hash.hpp"
#include "nn/loss.hpp"

namespace crlab::ppo {

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw_config("ppo.gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw_config("ppo.gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw_config("ppo.clip must be positive");
  if (epochs < 1) throw_config("ppo.epochs must be >= 1");
  if (minibatch_size < 1) throw_config("ppo.minibatch_size must be >= 1");
  if (horizon < 1) throw_config("ppo.horizon must be >= 1");
  if (!(learning_rate > 0.0)) throw_config("ppo.learning_rate must be positive");
  if (total_timesteps < horizon || total_timesteps % horizon != 0) {
    throw_config("ppo.total_timesteps must be a positive multiple of ppo.horizon");
  }
  if (checkpoint_interval < horizon || checkpoint_interval % horizon != 0) {
    throw_config("ppo.checkpoint_interval must be a positive multiple of ppo.horizon");
  }
  if (hidden.empty()) throw_config("ppo.hidden must list at least one layer");
}

PolicyNet PolicyNet::create(int feature_dim, const PpoConfig& config, Rng& rng) {
  PolicyNet p;
  p.actor = {"actor", {feature_dim}, nn::Activation::kTanh, nn::Head::kSoftmax};
  p.critic = {"critic", {feature_dim}, nn::Activation::kTanh, nn::Head::kLinear};
  for (int h : config.hidden) {
    p.actor.layers.push_back(h);
    p.critic.layers.push_back(h);
  }
  p.actor.layers.push_back(sim::kNumActions);
  p.critic.layers.push_back(1);
  p.params = nn::init_params(p.actor, rng);
  p.params.merge(nn::init_params(p.critic, rng));
  return p;
}

PolicyNet PolicyNet::from_checkpoint(const nn::ParamSet& stored) {
  const nn::ParamEntry* kind = stored.find("meta.policy");
  if (!kind || kind->values.size() != 1 || kind->values[0] != 1.0) {
    throw_io("checkpoint is not an actor-critic teacher policy");
  }
  PolicyNet p;
  p.params = stored.subset("actor.");
  p.params.merge(stored.subset("critic."));
  p.actor = nn::infer_spec(p.params, "actor", nn::Activation::kTanh, nn::Head::kSoftmax);
  p.critic = nn::infer_spec(p.params, "critic", nn::Activation::kTanh, nn::Head::kLinear);
  if (p.actor.output_size() != sim::kNumActions || p.critic.output_size() != 1 ||
      p.actor.input_size() != p.critic.input_size()) {
    throw_io("teacher checkpoint has inconsistent actor/critic shapes");
  }
  return p;
}

nn::ParamSet PolicyNet::to_checkpoint() const {
  nn::ParamSet out = params;
  out.add("meta.policy", {1}, {1.0});
  return out;
}

nn::Matrix PolicyNet::action_logits(const nn::Matrix& features) const {
  return nn::logits(params, actor, features);
}

nn::Matrix PolicyNet::values(const nn::Matrix& features) const {
  return nn::logits(params, critic, features);
}

std::array<double, 4> PolicyNet::probs(std::span<const double> features) const {
  const nn::Matrix x = Eigen::Map<const nn::Matrix>(features.data(), 1, static_cast<Eigen::Index>(features.size()));
  const nn::Matrix p = nn::softmax_rows(action_logits(x));
  return {p(0, 0), p(0, 1), p(0, 2), p(0, 3)};
}

int PolicyNet::greedy_action(std::span<const double> features) const {
  const auto p = probs(features);
  return argmax_lowest(std::span<const double>(p));
}

double reward_scale_for(const sim::TaskSpec& task, const PpoConfig& config) {
  if (config.scale_circle_reward && task.kind == sim::TaskKind::kTargetCircling) {
    return 1.0 / (task.lambda * task.lambda);
  }
  return 1.0;
}

FeatureMap FeatureMap::from_encoder(const srl::SrlModel& encoder) {
  return {encoder.state_dim(), [&encoder](const sim::Env& env) { return encoder.encode(env.observation()); }};
}

RolloutCollector::RolloutCollector(sim::Env env, FeatureMap features, std::uint64_t seed,
                                   double reward_scale)
    : env_(std::move(env)), map_(std::move(features)), seed_(seed), reward_scale_(reward_scale) {
  start_episode();
}

void RolloutCollector::start_episode() {
  env_.reset(derive_seed(seed_, episode_++));
  features_ = map_.fn(env_);
  episode_reward_ = 0.0;
}

RolloutBuffer RolloutCollector::collect(const PolicyNet& policy, int horizon, Rng& rng) {
  if (policy.feature_dim() != map_.dim) {
    throw_usage("policy input size " + std::to_string(policy.feature_dim()) +
                " does not match feature size " + std::to_string(map_.dim));
  }
  RolloutBuffer buf;
  const auto n = static_cast<std::size_t>(horizon);
  const int d = map_.dim;
  buf.features.resize(horizon, d);
  buf.actions.reserve(n);
  buf.log_probs.reserve(n);
  buf.rewards.reserve(n);
  buf.raw_rewards.reserve(n);
  buf.values.reserve(n);
  buf.dones.reserve(n);
  for (int t = 0; t < horizon; ++t) {
    const nn::Matrix x = Eigen::Map<const nn::Matrix>(features_.data(), 1, d);
    buf.features.row(t) = x;
    const nn::Matrix logp = nn::log_softmax_rows(policy.action_logits(x));
    const double value = policy.values(x)(0, 0);
    std::array<double, 4> p;
    for (int a = 0; a < sim::kNumActions; ++a) p[static_cast<std::size_t>(a)] = std::exp(logp(0, a));
    const int action = rng.categorical(std::span<const double>(p));
    const sim::Env::Transition tr = env_.step(static_cast<sim::Action>(action));
    buf.actions.push_back(action);
    buf.log_probs.push_back(logp(0, action));
    buf.values.push_back(value);
    buf.raw_rewards.push_back(tr.reward);
    buf.rewards.push_back(tr.reward * reward_scale_);
    buf.dones.push_back(tr.done ? 1 : 0);
    episode_reward_ += tr.reward;
    if (tr.done) {
      buf.completed_episode_rewards.push_back(episode_reward_);
      start_episode();
    } else {
      features_ = map_.fn(env_);
    }
  }
  const nn::Matrix last = Eigen::Map<const nn::Matrix>(features_.data(), 1, d);
  buf.bootstrap_value = policy.values(last)(0, 0);
  return buf;
}

RolloutBuffer collect_rollouts(const PolicyNet& policy, RolloutCollector& collector, int horizon,
                               Rng& rng) {
  return collector.collect(policy, horizon, rng);
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw_usage("gae: expected " + std::to_string(n + 1) + " values and " + std::to_string(n) +
                " done flags, got " + std::to_string(values.size()) + " and " + std::to_string(dones.size()));
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double keep = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * keep * values[i + 1] - values[i];
    next_adv = delta + gamma * lambda * keep * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
  }
  return out;
}

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda) {
  std::vector<double> values = buffer.values;
  values.push_back(buffer.bootstrap_value);
  GaeResult r = gae(buffer.rewards, values, buffer.dones, gamma, lambda);
  buffer.advantages = std::move(r.advantages);
  buffer.returns = std::move(r.returns);
}

void normalize_advantages(std::span<double> adv) {
  if (adv.size() < 2) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

nn::OptState make_optimizer(const PolicyNet& policy, const PpoConfig& config) {
  nn::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.epsilon = config.adam_epsilon;
  return nn::make_opt_state(policy.params, adam);
}

UpdateMetrics ppo_update(PolicyNet& policy, nn::OptState& opt, const RolloutBuffer& buffer,
                         const PpoConfig& config, Rng& rng) {
  if (!buffer.has_advantages()) throw_usage("ppo_update: buffer has no advantages");
  std::vector<double> adv = buffer.advantages;
  normalize_advantages(adv);

  const std::size_t n = buffer.size();
  const auto mb = static_cast<std::size_t>(config.minibatch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::ParamSet grads = policy.params.zeros_like();
  UpdateMetrics m;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t len = std::min(mb, n - start);
      const auto rows = static_cast<Eigen::Index>(len);
      nn::Matrix x(rows, buffer.features.cols());
      nn::Matrix ret(rows, 1);
      nn::SurrogateTargets st;
      st.clip = config.clip;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = order[start + i];
        x.row(static_cast<Eigen::Index>(i)) = buffer.features.row(static_cast<Eigen::Index>(k));
        ret(static_cast<Eigen::Index>(i), 0) = buffer.returns[k];
        st.actions.push_back(buffer.actions[k]);
        st.advantages.push_back(adv[k]);
        st.old_log_probs.push_back(buffer.log_probs[k]);
      }
      nn::Tape actor_tape;
      nn::Tape critic_tape;
      const nn::Matrix z = nn::logits(policy.params, policy.actor, x, &actor_tape);
      const nn::Matrix v = nn::logits(policy.params, policy.critic, x, &critic_tape);
      nn::SurrogateStats stats;
      const nn::LossValue surr = nn::ppo_surrogate_loss(z, st, &stats);
      const nn::LossValue ent = nn::mean_entropy(z);
      // Value loss is 0.5 * mean squared error.
      const nn::LossValue vl = nn::mse_loss(v, ret);
      const double total = surr.value + config.value_coef * 0.5 * vl.value - config.entropy_coef * ent.value;
      if (!std::isfinite(total)) throw_numeric("ppo_update: non-finite loss");

      grads.set_zero();
      nn::backward_from_logits(policy.params, policy.actor, actor_tape,
                               surr.d_output - config.entropy_coef * ent.d_output, grads);
      nn::backward_from_logits(policy.params, policy.critic, critic_tape,
                               (config.value_coef * 0.5) * vl.d_output, grads);
      nn::clip_grad_norm(grads, config.max_grad_norm);
      nn::opt_step_inplace(policy.params, grads, opt);

      m.policy_loss += surr.value;
      m.value_loss += 0.5 * vl.value;
      m.entropy += ent.value;
      m.mean_ratio += stats.mean_ratio;
      m.clip_fraction += stats.clip_fraction;
      m.minibatches += 1;
    }
  }
  const double k = static_cast<double>(std::max(m.minibatches, 1));
  m.policy_loss /= k;
  m.value_loss /= k;
  m.entropy /= k;
  m.mean_ratio /= k;
  m.clip_fraction /= k;
  return m;
}

namespace {

PolicyNet rounded(const PolicyNet& p) {
  PolicyNet out = p;
  out.params = nn::quantize_f32(p.params);
  return out;
}

}  // namespace

TrainTaskResult train_task(sim::Env env, const srl::SrlModel& encoder, const PpoConfig& config,
                           std::uint64_t seed, const PolicyNet* init, const CheckpointSink& sink) {
  return train_task(std::move(env), FeatureMap::from_encoder(encoder), config, seed, init, sink);
}

TrainTaskResult train_task(sim::Env env, const FeatureMap& features, const PpoConfig& config,
                           std::uint64_t seed, const PolicyNet* init, const CheckpointSink& sink) {
  config.validate();
  Rng init_rng(derive_seed(seed, "ppo-init"));
  PolicyNet policy = init ? *init : PolicyNet::create(features.dim, config, init_rng);
  if (policy.feature_dim() != features.dim) {
    throw_usage("train_task: policy input size does not match feature size");
  }
  nn::OptState opt = make_optimizer(policy, config);
  Rng action_rng(derive_seed(seed, "ppo-actions"));
  Rng shuffle_rng(derive_seed(seed, "ppo-shuffle"));
  const double scale = reward_scale_for(env.task(), config);
  RolloutCollector collector(std::move(env), features, derive_seed(seed, "ppo-episodes"), scale);

  TrainTaskResult result;
  result.reward_curve.name = "mean_episode_reward";
  result.reward_curve.x_label = "timesteps";
  result.reward_curve.err_label = "std_episode_reward";
  std::int64_t timesteps = 0;
  while (timesteps < config.total_timesteps) {
    RolloutBuffer buf = collector.collect(policy, config.horizon, action_rng);
    compute_advantages(buf, config.gamma, config.gae_lambda);
    ppo_update(policy, opt, buf, config, shuffle_rng);
    timesteps += config.horizon;
    if (!buf.completed_episode_rewards.empty()) {
      const auto& r = buf.completed_episode_rewards;
      const double n = static_cast<double>(r.size());
      const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
      double var = 0.0;
      for (double x : r) var += (x - mean) * (x - mean);
      result.reward_curve.points.push_back(
          {static_cast<double>(timesteps), mean, std::sqrt(var / n)});
    }
    if (timesteps % config.checkpoint_interval == 0) {
      result.checkpoints.push_back({timesteps, rounded(policy)});
      if (sink) sink(result.checkpoints.back());
    }
  }
  result.teacher = rounded(policy);
  return result;
}

}  // namespace crlab::ppo
