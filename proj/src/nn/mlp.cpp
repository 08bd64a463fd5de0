#include "nn/mlp.hpp"

#include <cmath>

#include "common/error.hpp"

namespace crlab::nn {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const RowVector>;
using MutRowMap = Eigen::Map<RowVector>;

void activate(Matrix& z, Activation act) {
  if (act == Activation::kReLU) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Multiplies the upstream gradient by the activation derivative, expressed in
// terms of the activation output.
void activation_grad(Matrix& d, const Matrix& out, Activation act) {
  if (act == Activation::kReLU) {
    d = (out.array() > 0.0).select(d, 0.0);
  } else {
    d.array() *= 1.0 - out.array().square();
  }
}

}  // namespace

std::string NetworkSpec::weight_name(int layer) const {
  return prefix + ".l" + std::to_string(layer) + ".w";
}

std::string NetworkSpec::bias_name(int layer) const {
  return prefix + ".l" + std::to_string(layer) + ".b";
}

void NetworkSpec::validate() const {
  if (layers.size() < 2) throw_usage("network '" + prefix + "' needs at least input and output sizes");
  for (int n : layers) {
    if (n <= 0) throw_usage("network '" + prefix + "' has a non-positive layer size");
  }
}

ParamSet init_params(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  ParamSet p;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<std::uint32_t>(spec.layers[l]);
    const auto out = static_cast<std::uint32_t>(spec.layers[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    p.add(spec.weight_name(l), {in, out}, std::move(w));
    p.add_zeros(spec.bias_name(l), {out});
  }
  return p;
}

void check_params(const ParamSet& params, const NetworkSpec& spec) {
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<std::uint32_t>(spec.layers[l]);
    const auto out = static_cast<std::uint32_t>(spec.layers[l + 1]);
    const ParamEntry& w = params.at(spec.weight_name(l));
    const ParamEntry& b = params.at(spec.bias_name(l));
    if (w.shape != std::vector<std::uint32_t>{in, out}) {
      throw_usage("parameter '" + w.name + "' has shape " + shape_string(w.shape) + ", expected [" +
                  std::to_string(in) + "x" + std::to_string(out) + "]");
    }
    if (b.shape != std::vector<std::uint32_t>{out}) {
      throw_usage("parameter '" + b.name + "' has shape " + shape_string(b.shape) + ", expected [" +
                  std::to_string(out) + "]");
    }
  }
}

NetworkSpec infer_spec(const ParamSet& params, std::string prefix, Activation activation, Head head) {
  NetworkSpec spec{std::move(prefix), {}, activation, head};
  for (int l = 0;; ++l) {
    const ParamEntry* w = params.find(spec.weight_name(l));
    if (!w) break;
    if (w->shape.size() != 2) throw_usage("parameter '" + w->name + "' is not a matrix");
    if (l == 0) spec.layers.push_back(static_cast<int>(w->shape[0]));
    spec.layers.push_back(static_cast<int>(w->shape[1]));
  }
  if (spec.layers.size() < 2) throw_usage("no layers found for network '" + spec.prefix + "'");
  check_params(params, spec);
  return spec;
}

Matrix logits(const ParamSet& params, const NetworkSpec& spec, const Matrix& input, Tape* tape) {
  if (input.cols() != spec.input_size()) {
    throw_usage("network '" + spec.prefix + "': input width " + std::to_string(input.cols()) +
                " does not match declared input size " + std::to_string(spec.input_size()));
  }
  if (tape) tape->inputs.clear();
  Matrix a = input;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const ParamEntry& w = params.at(spec.weight_name(l));
    const ParamEntry& b = params.at(spec.bias_name(l));
    const int in = spec.layers[l];
    const int out = spec.layers[l + 1];
    if (w.values.size() != static_cast<std::size_t>(in) * out || b.values.size() != static_cast<std::size_t>(out)) {
      check_params(params, spec);
    }
    Matrix z = a * ConstMap(w.values.data(), in, out);
    z.rowwise() += ConstRowMap(b.values.data(), out);
    if (tape) tape->inputs.push_back(std::move(a));
    if (l + 1 < spec.num_layers()) activate(z, spec.activation);
    a = std::move(z);
  }
  return a;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix log_softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    out.row(i) = (z.row(i).array() - lse).matrix();
  }
  return out;
}

Matrix forward(const ParamSet& params, const NetworkSpec& spec, const Matrix& input) {
  Matrix z = logits(params, spec, input);
  if (spec.head == Head::kSoftmax) return softmax_rows(z);
  return z;
}

Matrix backward_from_logits(const ParamSet& params, const NetworkSpec& spec, const Tape& tape,
                            const Matrix& d_logits, ParamSet& grads, bool need_input_grad) {
  const int n_layers = spec.num_layers();
  if (static_cast<int>(tape.inputs.size()) != n_layers) throw_usage("tape does not match network '" + spec.prefix + "'");
  if (d_logits.cols() != spec.output_size() || d_logits.rows() != tape.inputs.front().rows()) {
    throw_usage("network '" + spec.prefix + "': output gradient shape mismatch");
  }
  Matrix dz = d_logits;
  Matrix d_input;
  for (int l = n_layers - 1; l >= 0; --l) {
    const int in = spec.layers[l];
    const int out = spec.layers[l + 1];
    const Matrix& a = tape.inputs[static_cast<std::size_t>(l)];
    ParamEntry& gw = grads.at(spec.weight_name(l));
    ParamEntry& gb = grads.at(spec.bias_name(l));
    MutMap(gw.values.data(), in, out).noalias() += a.transpose() * dz;
    // Aligned temporary: keeps the summation order independent of buffer placement.
    const RowVector db = dz.colwise().sum();
    MutRowMap(gb.values.data(), out) += db;
    if (l == 0 && !need_input_grad) break;
    const ParamEntry& w = params.at(spec.weight_name(l));
    Matrix da = dz * ConstMap(w.values.data(), in, out).transpose();
    if (l == 0) {
      d_input = std::move(da);
      break;
    }
    activation_grad(da, a, spec.activation);
    dz = std::move(da);
  }
  return d_input;
}

}  // namespace crlab::nn
