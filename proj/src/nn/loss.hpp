#pragma once

#include <vector>

#include "nn/mlp.hpp"

namespace crlab::nn {

enum class LossKind : std::uint8_t { kMSE, kCrossEntropy, kKLToTeacher, kPPOSurrogate };

const char* loss_name(LossKind kind);

// Per-sample inputs of the clipped policy-gradient surrogate.
struct SurrogateTargets {
  std::vector<int> actions;
  std::vector<double> advantages;
  std::vector<double> old_log_probs;
  double clip = 0.2;
};

struct LossTargets {
  Matrix dense;                 // MSE targets, or target distributions for CE / KL
  SurrogateTargets surrogate;   // PPOSurrogate only
};

// Loss value and its gradient with respect to the pre-head output.
struct LossValue {
  double value = 0.0;
  Matrix d_output;
};

// Mean squared error over every element of the batch.
LossValue mse_loss(const Matrix& prediction, const Matrix& target);
// -mean_b sum_k t_bk log softmax(z)_bk; targets may be soft.
LossValue cross_entropy_loss(const Matrix& logits, const Matrix& target_probs);
// mean_b KL(teacher_b || softmax(z_b)).
LossValue kl_to_teacher_loss(const Matrix& logits, const Matrix& teacher_probs);

struct SurrogateStats {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};
// -mean_b min(rho A, clip(rho, 1-eps, 1+eps) A), rho = pi(a|s) / pi_old(a|s).
LossValue ppo_surrogate_loss(const Matrix& logits, const SurrogateTargets& targets,
                             SurrogateStats* stats = nullptr);
// Mean policy entropy and its gradient with respect to the logits.
LossValue mean_entropy(const Matrix& logits);

LossValue compute_loss(LossKind kind, const Matrix& output, const LossTargets& targets);

struct Gradients {
  double loss = 0.0;
  ParamSet grads;
};

// Loss and exact analytic gradients for every parameter of the network.
Gradients backward(const ParamSet& params, const NetworkSpec& spec, const Matrix& input,
                   LossKind kind, const LossTargets& targets);

// Scalar loss only (used by finite differences).
double loss_value(const ParamSet& params, const NetworkSpec& spec, const Matrix& input,
                  LossKind kind, const LossTargets& targets);

}  // namespace crlab::nn
