#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nn/mlp.hpp"
#include "srl/preprocess.hpp"
#include "srl/random_dataset.hpp"

namespace crlab::srl {

struct SrlConfig {
  int state_dim = 32;
  std::vector<int> encoder_hidden{256, 64};
  std::vector<int> inverse_hidden{64};
  nn::Activation activation = nn::Activation::kReLU;
  double w_rec = 1.0;
  double w_inv = 2.0;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int grid = 16;
  bool foreground = true;
  double blur_sigma = 3.0;
  // Inverse head input: s_t+1 - s_t when true, the pair (s_t, s_t+1) otherwise.
  bool inverse_on_difference = false;

  void validate() const;
};

// Joint autoencoder + inverse-dynamics model. The encoder maps a preprocessed
// image to a state vector; the decoder reconstructs the image from it; the
// inverse head predicts the action from (s_t, s_t+1).
class SrlModel {
 public:
  static SrlModel create(const SrlConfig& config, Preprocessor pre, Rng& rng);
  static SrlModel from_checkpoint(const nn::ParamSet& stored);

  // Trainable parameters plus feature-standardization and metadata entries.
  nn::ParamSet to_checkpoint() const;

  int state_dim() const { return encoder.output_size(); }

  // Raw encoder output for preprocessed rows.
  nn::Matrix encode_raw(const nn::Matrix& preprocessed) const;
  // Standardized features, the representation consumed by policies.
  nn::Matrix encode_batch(const nn::Matrix& preprocessed) const;
  std::vector<double> encode(const sim::Observation& obs) const;

  // Fits the per-dimension standardization to the given preprocessed rows.
  void fit_standardization(const nn::Matrix& preprocessed);

  nn::ParamSet params;  // encoder.*, decoder.*, inverse.*
  nn::NetworkSpec encoder;
  nn::NetworkSpec decoder;
  nn::NetworkSpec inverse;
  double w_rec = 1.0;
  double w_inv = 2.0;
  bool inverse_on_difference = false;
  Preprocessor pre;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
};

struct SrlBatch {
  nn::Matrix obs;       // preprocessed I_t rows
  nn::Matrix next_obs;  // preprocessed I_t+1 rows
  std::vector<int> actions;
};

struct SrlLossTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double inverse = 0.0;
};

// w_rec * MSE(decoder(E(I_t)), I_t) + w_inv * CE(inverse(E(I_t), E(I_t+1)), a_t).
SrlLossTerms srl_loss(const SrlModel& model, const SrlBatch& batch);
// Same, accumulating exact gradients into `grads` (aligned with model.params).
SrlLossTerms srl_loss_grad(const SrlModel& model, const SrlBatch& batch, nn::ParamSet& grads);

// Preprocesses every frame of the dataset (one row per frame).
nn::Matrix preprocess_frames(const RandomDataset& data, const Preprocessor& pre);
SrlBatch make_batch(const RandomDataset& data, const nn::Matrix& frames,
                    std::span<const std::size_t> indices);

struct SrlTrainResult {
  SrlModel model;
  std::vector<double> epoch_loss;
};

// Minibatch Adam over `indices` (all transitions when empty). Numeric error
// with the epoch index if the loss diverges.
SrlTrainResult train_srl(const RandomDataset& data, const SrlConfig& config, std::uint64_t seed,
                         std::span<const std::size_t> indices = {});

// Fraction of transitions whose argmax inverse prediction equals the action.
double inverse_accuracy(const SrlModel& model, const RandomDataset& data,
                        std::span<const std::size_t> indices);

}  // namespace crlab::srl
