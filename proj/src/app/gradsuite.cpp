#include "app/gradsuite.hpp"

#include <cmath>
#include <cstdio>

#include "common/error.hpp"
#include "common/hash.hpp"
#include "common/rng.hpp"
#include "nn/gradcheck.hpp"
#include "nn/loss.hpp"
#include "srl/srl_model.hpp"

namespace crlab::app {

bool GradSuiteReport::passed() const {
  for (const auto& e : entries) {
    if (e.failures > 0) return false;
  }
  return !entries.empty();
}

std::string GradSuiteReport::text() const {
  std::string out;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-14s nets=%d failures=%d max_rel_err=%.3e worst=%s\n", e.loss.c_str(), e.nets,
                  e.failures, e.max_relative_error, e.worst.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "h=%g tol=%g %s\n", h, tolerance, passed() ? "PASS" : "FAIL");
  out += buf;
  return out;
}

namespace {

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

nn::Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

nn::Matrix random_probs(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) total += (m(i, j) = rng.uniform(0.05, 1.0));
    m.row(i) /= total;
  }
  return m;
}

nn::NetworkSpec random_net(Rng& rng, int outputs, nn::Head head) {
  nn::NetworkSpec spec{"net", {pick(rng, 2, 6)}, nn::Activation::kTanh, head};
  const int depth = pick(rng, 1, 2);
  for (int d = 0; d < depth; ++d) spec.layers.push_back(pick(rng, 2, 6));
  spec.layers.push_back(outputs);
  return spec;
}

void note(GradSuiteEntry& entry, int net, const nn::GradCheckReport& r, double tol) {
  ++entry.nets;
  if (r.max_relative_error > tol) ++entry.failures;
  if (entry.worst.empty() || r.max_relative_error > entry.max_relative_error) {
    entry.max_relative_error = r.max_relative_error;
    entry.worst = "net " + std::to_string(net) + " " + r.worst_parameter + "[" + std::to_string(r.worst_index) + "]";
  }
}

void check_network_loss(GradSuiteEntry& entry, nn::LossKind kind, int nets, Rng& rng, double h, double tol) {
  for (int k = 0; k < nets; ++k) {
    const bool dense = kind == nn::LossKind::kMSE;
    const nn::NetworkSpec spec =
        random_net(rng, dense ? pick(rng, 1, 4) : 4, dense ? nn::Head::kLinear : nn::Head::kSoftmax);
    nn::ParamSet params = nn::init_params(spec, rng);
    for (auto& e : params.entries()) {
      for (double& v : e.values) v += rng.uniform(-0.3, 0.3);
    }
    const Eigen::Index batch = pick(rng, 2, 5);
    const nn::Matrix x = random_matrix(rng, batch, spec.input_size());
    nn::LossTargets t;
    if (kind == nn::LossKind::kMSE) {
      t.dense = random_matrix(rng, batch, spec.output_size());
    } else if (kind == nn::LossKind::kPPOSurrogate) {
      // Old log-probabilities place ratios inside and on both sides of the clip range.
      const nn::Matrix logp = nn::log_softmax_rows(nn::logits(params, spec, x));
      const double ratios[] = {0.6, 0.9, 1.0, 1.1, 1.5};
      t.surrogate.clip = 0.2;
      for (Eigen::Index i = 0; i < batch; ++i) {
        const int a = pick(rng, 0, 3);
        t.surrogate.actions.push_back(a);
        t.surrogate.advantages.push_back(rng.uniform(-2.0, 2.0));
        t.surrogate.old_log_probs.push_back(logp(i, a) - std::log(ratios[rng.below(5)]));
      }
    } else {
      t.dense = random_probs(rng, batch, 4);
    }
    note(entry, k, nn::finite_diff_check(params, spec, x, kind, t, h, tol), tol);
  }
}

void check_srl_loss(GradSuiteEntry& entry, int nets, Rng& rng, double h, double tol) {
  for (int k = 0; k < nets; ++k) {
    srl::SrlConfig cfg;
    cfg.state_dim = pick(rng, 2, 4);
    cfg.encoder_hidden = {pick(rng, 3, 6)};
    cfg.inverse_hidden = {pick(rng, 3, 6)};
    cfg.activation = nn::Activation::kTanh;
    cfg.w_rec = rng.uniform(0.5, 2.0);
    cfg.w_inv = rng.uniform(0.5, 3.0);
    cfg.inverse_on_difference = k % 2 == 1;
    srl::Preprocessor pre = srl::Preprocessor::for_image(4, 4, 2);
    srl::SrlModel model = srl::SrlModel::create(cfg, pre, rng);
    const Eigen::Index batch = pick(rng, 2, 4);
    srl::SrlBatch b;
    b.obs = random_matrix(rng, batch, pre.feature_size());
    b.next_obs = random_matrix(rng, batch, pre.feature_size());
    for (Eigen::Index i = 0; i < batch; ++i) b.actions.push_back(pick(rng, 0, 3));
    nn::ParamSet grads = model.params.zeros_like();
    srl::srl_loss_grad(model, b, grads);
    auto fn = [&](const nn::ParamSet& p) {
      srl::SrlModel probe = model;
      probe.params = p;
      return srl::srl_loss(probe, b).total;
    };
    note(entry, k, nn::finite_diff_check(model.params, fn, grads, h, tol), tol);
  }
}

}  // namespace

GradSuiteReport run_grad_suite(int nets, std::uint64_t seed, double h, double tolerance) {
  if (nets < 1) throw_config("gradcheck: nets must be >= 1");
  GradSuiteReport report;
  report.h = h;
  report.tolerance = tolerance;
  const nn::LossKind kinds[] = {nn::LossKind::kMSE, nn::LossKind::kCrossEntropy, nn::LossKind::kKLToTeacher,
                                nn::LossKind::kPPOSurrogate};
  for (nn::LossKind kind : kinds) {
    Rng rng(derive_seed(seed, nn::loss_name(kind)));
    GradSuiteEntry entry{nn::loss_name(kind), 0, 0, 0.0, ""};
    check_network_loss(entry, kind, nets, rng, h, tolerance);
    report.entries.push_back(entry);
  }
  Rng rng(derive_seed(seed, "srl_joint"));
  GradSuiteEntry entry{"srl_joint", 0, 0, 0.0, ""};
  check_srl_loss(entry, nets, rng, h, tolerance);
  report.entries.insert(report.entries.begin() + 3, entry);
  return report;
}

}  // namespace crlab::app
