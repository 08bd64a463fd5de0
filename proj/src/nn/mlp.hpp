#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "nn/params.hpp"

namespace crlab::nn {

// Batches are row-major: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class Activation : std::uint8_t { kReLU = 0, kTanh = 1 };
enum class Head : std::uint8_t { kLinear = 0, kSoftmax = 1 };

// Dense feed-forward network. Parameters live in a ParamSet under
// "<prefix>.l<i>.w" (shape in x out) and "<prefix>.l<i>.b" (shape out).
struct NetworkSpec {
  std::string prefix;
  std::vector<int> layers;  // input size, hidden sizes..., output size
  Activation activation = Activation::kTanh;
  Head head = Head::kLinear;

  int input_size() const { return layers.front(); }
  int output_size() const { return layers.back(); }
  int num_layers() const { return static_cast<int>(layers.size()) - 1; }
  std::string weight_name(int layer) const;
  std::string bias_name(int layer) const;

  void validate() const;
};

// Xavier-uniform weights, zero biases.
ParamSet init_params(const NetworkSpec& spec, Rng& rng);

// Contract check: every layer entry exists with the expected shape.
void check_params(const ParamSet& params, const NetworkSpec& spec);

// Recovers layer sizes from stored weight shapes.
NetworkSpec infer_spec(const ParamSet& params, std::string prefix, Activation activation, Head head);

struct Tape {
  std::vector<Matrix> inputs;  // input to each layer (post-activation of the previous one)
};

// Pre-head output (logits for a softmax head). Records a tape when given.
Matrix logits(const ParamSet& params, const NetworkSpec& spec, const Matrix& input,
              Tape* tape = nullptr);

// Output after the head; softmax rows are probability vectors.
Matrix forward(const ParamSet& params, const NetworkSpec& spec, const Matrix& input);

// Accumulates parameter gradients into `grads` (must hold the network's
// entries) and returns d(loss)/d(input) when `need_input_grad` is set.
Matrix backward_from_logits(const ParamSet& params, const NetworkSpec& spec, const Tape& tape,
                            const Matrix& d_logits, ParamSet& grads, bool need_input_grad = false);

Matrix softmax_rows(const Matrix& z);
Matrix log_softmax_rows(const Matrix& z);

}  // namespace crlab::nn
