#include "nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace crlab::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw_usage(std::string(what) + ": target shape " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + " does not match output shape " +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

}  // namespace

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kMSE: return "mse";
    case LossKind::kCrossEntropy: return "cross_entropy";
    case LossKind::kKLToTeacher: return "kl_to_teacher";
    case LossKind::kPPOSurrogate: return "ppo_surrogate";
  }
  return "?";
}

LossValue mse_loss(const Matrix& prediction, const Matrix& target) {
  require_same_shape(prediction, target, "mse");
  const double n = static_cast<double>(prediction.size());
  Matrix diff = prediction - target;
  LossValue out;
  out.value = diff.squaredNorm() / n;
  out.d_output = (2.0 / n) * diff;
  return out;
}

LossValue cross_entropy_loss(const Matrix& logits, const Matrix& target_probs) {
  require_same_shape(logits, target_probs, "cross_entropy");
  const double batch = static_cast<double>(logits.rows());
  const Matrix logp = log_softmax_rows(logits);
  const Matrix p = softmax_rows(logits);
  LossValue out;
  out.value = -(target_probs.array() * logp.array()).sum() / batch;
  out.d_output.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mass = target_probs.row(i).sum();
    out.d_output.row(i) = (mass * p.row(i) - target_probs.row(i)) / batch;
  }
  return out;
}

LossValue kl_to_teacher_loss(const Matrix& logits, const Matrix& teacher_probs) {
  LossValue out = cross_entropy_loss(logits, teacher_probs);
  // KL = CE - H(teacher); the entropy term has no dependence on the logits.
  double teacher_entropy = 0.0;
  for (Eigen::Index i = 0; i < teacher_probs.size(); ++i) {
    const double t = teacher_probs.data()[i];
    if (t > 0.0) teacher_entropy -= t * std::log(t);
  }
  out.value -= teacher_entropy / static_cast<double>(logits.rows());
  return out;
}

LossValue ppo_surrogate_loss(const Matrix& logits, const SurrogateTargets& targets,
                             SurrogateStats* stats) {
  const auto batch = static_cast<std::size_t>(logits.rows());
  if (targets.actions.size() != batch || targets.advantages.size() != batch ||
      targets.old_log_probs.size() != batch) {
    throw_usage("ppo_surrogate: per-sample inputs do not match batch size " + std::to_string(batch));
  }
  const Matrix logp = log_softmax_rows(logits);
  const double eps = targets.clip;
  const double inv_b = 1.0 / static_cast<double>(batch);
  LossValue out;
  out.d_output = Matrix::Zero(logits.rows(), logits.cols());
  double ratio_sum = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const int a = targets.actions[i];
    if (a < 0 || a >= logits.cols()) throw_usage("ppo_surrogate: action out of range");
    const double adv = targets.advantages[i];
    const double ratio = std::exp(logp(static_cast<Eigen::Index>(i), a) - targets.old_log_probs[i]);
    const double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped_ratio * adv;
    ratio_sum += ratio;
    if (ratio != clipped_ratio) ++clipped;
    if (clipped_obj < unclipped_obj) {
      // The clipped branch is active and constant in the parameters.
      out.value -= clipped_obj * inv_b;
      continue;
    }
    out.value -= unclipped_obj * inv_b;
    // d(rho A)/dz_j = rho A (1[j == a] - p_j)
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double pj = std::exp(logp(row, j));
      const double indicator = (j == a) ? 1.0 : 0.0;
      out.d_output(row, j) = -unclipped_obj * (indicator - pj) * inv_b;
    }
  }
  if (stats) {
    stats->mean_ratio = ratio_sum * inv_b;
    stats->clip_fraction = static_cast<double>(clipped) * inv_b;
  }
  return out;
}

LossValue mean_entropy(const Matrix& logits) {
  const Matrix logp = log_softmax_rows(logits);
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  LossValue out;
  out.d_output.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto p = logp.row(i).array().exp();
    const double h = -(p * logp.row(i).array()).sum();
    out.value += h * inv_b;
    out.d_output.row(i) = (-(p * (logp.row(i).array() + h)) * inv_b).matrix();
  }
  return out;
}

LossValue compute_loss(LossKind kind, const Matrix& output, const LossTargets& targets) {
  switch (kind) {
    case LossKind::kMSE: return mse_loss(output, targets.dense);
    case LossKind::kCrossEntropy: return cross_entropy_loss(output, targets.dense);
    case LossKind::kKLToTeacher: return kl_to_teacher_loss(output, targets.dense);
    case LossKind::kPPOSurrogate: return ppo_surrogate_loss(output, targets.surrogate);
  }
  throw_usage("unknown loss kind");
}

namespace {

void check_head(LossKind kind, const NetworkSpec& spec) {
  const bool wants_softmax = kind != LossKind::kMSE;
  if (wants_softmax != (spec.head == Head::kSoftmax)) {
    throw_usage(std::string("loss ") + loss_name(kind) + " is incompatible with the head of network '" +
                spec.prefix + "'");
  }
}

}  // namespace

Gradients backward(const ParamSet& params, const NetworkSpec& spec, const Matrix& input,
                   LossKind kind, const LossTargets& targets) {
  check_head(kind, spec);
  Tape tape;
  const Matrix out = logits(params, spec, input, &tape);
  LossValue loss = compute_loss(kind, out, targets);
  Gradients g;
  g.loss = loss.value;
  g.grads = params.subset(spec.prefix + ".").zeros_like();
  backward_from_logits(params, spec, tape, loss.d_output, g.grads);
  return g;
}

double loss_value(const ParamSet& params, const NetworkSpec& spec, const Matrix& input,
                  LossKind kind, const LossTargets& targets) {
  check_head(kind, spec);
  return compute_loss(kind, logits(params, spec, input), targets).value;
}

}  // namespace crlab::nn
