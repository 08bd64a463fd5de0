#include "srl/srl_model.hpp"

#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "nn/adam.hpp"
#include "nn/loss.hpp"

namespace crlab::srl {

void SrlConfig::validate() const {
  if (state_dim < 1) throw_config("srl.state_dim must be >= 1");
  if (epochs < 1) throw_config("srl.epochs must be >= 1");
  if (batch_size < 1) throw_config("srl.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw_config("srl.learning_rate must be positive");
  if (w_rec < 0.0 || w_inv < 0.0) throw_config("srl loss weights must be non-negative");
  if (blur_sigma < 0.0) throw_config("srl.blur_sigma must be non-negative");
}

SrlModel SrlModel::create(const SrlConfig& config, Preprocessor pre, Rng& rng) {
  config.validate();
  SrlModel m;
  m.pre = pre;
  m.w_rec = config.w_rec;
  m.w_inv = config.w_inv;
  const int in = pre.feature_size();
  m.encoder = {"encoder", {in}, config.activation, nn::Head::kLinear};
  for (int h : config.encoder_hidden) m.encoder.layers.push_back(h);
  m.encoder.layers.push_back(config.state_dim);
  m.decoder = {"decoder", {config.state_dim}, config.activation, nn::Head::kLinear};
  for (auto it = config.encoder_hidden.rbegin(); it != config.encoder_hidden.rend(); ++it) {
    m.decoder.layers.push_back(*it);
  }
  m.decoder.layers.push_back(in);
  m.inverse_on_difference = config.inverse_on_difference;
  const int inv_in = config.inverse_on_difference ? config.state_dim : 2 * config.state_dim;
  m.inverse = {"inverse", {inv_in}, config.activation, nn::Head::kSoftmax};
  for (int h : config.inverse_hidden) m.inverse.layers.push_back(h);
  m.inverse.layers.push_back(sim::kNumActions);
  m.params = nn::init_params(m.encoder, rng);
  m.params.merge(nn::init_params(m.decoder, rng));
  m.params.merge(nn::init_params(m.inverse, rng));
  m.feature_mean.assign(static_cast<std::size_t>(config.state_dim), 0.0);
  m.feature_scale.assign(static_cast<std::size_t>(config.state_dim), 1.0);
  return m;
}

nn::ParamSet SrlModel::to_checkpoint() const {
  nn::ParamSet out = params;
  const auto d = static_cast<std::uint32_t>(state_dim());
  out.add("features.mean", {d}, feature_mean);
  out.add("features.scale", {d}, feature_scale);
  out.add("meta.activation", {1}, {static_cast<double>(encoder.activation)});
  out.add("meta.loss_weights", {2}, {w_rec, w_inv});
  out.add("meta.inverse_input", {1}, {inverse_on_difference ? 1.0 : 0.0});
  pre.store(out, "input");
  return out;
}

SrlModel SrlModel::from_checkpoint(const nn::ParamSet& stored) {
  SrlModel m;
  const auto act = static_cast<nn::Activation>(static_cast<int>(stored.at("meta.activation").values.at(0)));
  m.pre = Preprocessor::load(stored, "input");
  const auto& weights = stored.at("meta.loss_weights").values;
  if (weights.size() != 2) throw_io("encoder checkpoint: malformed meta.loss_weights");
  m.w_rec = weights[0];
  m.w_inv = weights[1];
  m.inverse_on_difference = stored.at("meta.inverse_input").values.at(0) != 0.0;
  m.params = stored.subset("encoder.");
  m.params.merge(stored.subset("decoder."));
  m.params.merge(stored.subset("inverse."));
  m.encoder = nn::infer_spec(m.params, "encoder", act, nn::Head::kLinear);
  m.decoder = nn::infer_spec(m.params, "decoder", act, nn::Head::kLinear);
  m.inverse = nn::infer_spec(m.params, "inverse", act, nn::Head::kSoftmax);
  if (m.encoder.input_size() != m.pre.feature_size()) throw_io("encoder checkpoint: input size mismatch");
  m.feature_mean = stored.at("features.mean").values;
  m.feature_scale = stored.at("features.scale").values;
  if (m.feature_mean.size() != static_cast<std::size_t>(m.state_dim()) ||
      m.feature_scale.size() != m.feature_mean.size()) {
    throw_io("encoder checkpoint: standardization size mismatch");
  }
  return m;
}

nn::Matrix SrlModel::encode_raw(const nn::Matrix& preprocessed) const {
  return nn::logits(params, encoder, preprocessed);
}

nn::Matrix SrlModel::encode_batch(const nn::Matrix& preprocessed) const {
  nn::Matrix s = encode_raw(preprocessed);
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    s.col(j) = ((s.col(j).array() - feature_mean[k]) * feature_scale[k]).matrix();
  }
  return s;
}

std::vector<double> SrlModel::encode(const sim::Observation& obs) const {
  const nn::Matrix s = encode_batch(pre.apply(obs));
  return std::vector<double>(s.data(), s.data() + s.size());
}

void SrlModel::fit_standardization(const nn::Matrix& preprocessed) {
  const nn::Matrix s = encode_raw(preprocessed);
  const double n = static_cast<double>(s.rows());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const double mean = s.col(j).mean();
    const double var = (s.col(j).array() - mean).square().sum() / n;
    const auto k = static_cast<std::size_t>(j);
    feature_mean[k] = mean;
    feature_scale[k] = 1.0 / std::max(std::sqrt(var), 1e-3);
  }
}

namespace {

nn::Matrix one_hot(const std::vector<int>& actions) {
  nn::Matrix t = nn::Matrix::Zero(static_cast<Eigen::Index>(actions.size()), sim::kNumActions);
  for (std::size_t i = 0; i < actions.size(); ++i) t(static_cast<Eigen::Index>(i), actions[i]) = 1.0;
  return t;
}

nn::Matrix inverse_input(const SrlModel& model, const nn::Matrix& s_t, const nn::Matrix& s_next) {
  if (model.inverse_on_difference) return s_next - s_t;
  nn::Matrix pair(s_t.rows(), 2 * s_t.cols());
  pair.leftCols(s_t.cols()) = s_t;
  pair.rightCols(s_t.cols()) = s_next;
  return pair;
}

SrlLossTerms evaluate(const SrlModel& model, const SrlBatch& batch, nn::ParamSet* grads) {
  const Eigen::Index b = batch.obs.rows();
  if (batch.next_obs.rows() != b || static_cast<Eigen::Index>(batch.actions.size()) != b) {
    throw_usage("srl batch columns have different lengths");
  }
  nn::Matrix stacked(2 * b, batch.obs.cols());
  stacked.topRows(b) = batch.obs;
  stacked.bottomRows(b) = batch.next_obs;

  nn::Tape enc_tape;
  const nn::Matrix states = nn::logits(model.params, model.encoder, stacked, grads ? &enc_tape : nullptr);
  const nn::Matrix s_t = states.topRows(b);
  const Eigen::Index d = states.cols();
  const nn::Matrix pair = inverse_input(model, s_t, states.bottomRows(b));

  nn::Tape dec_tape;
  nn::Tape inv_tape;
  const nn::Matrix recon = nn::logits(model.params, model.decoder, s_t, grads ? &dec_tape : nullptr);
  const nn::Matrix inv_logits = nn::logits(model.params, model.inverse, pair, grads ? &inv_tape : nullptr);
  const nn::LossValue rec = nn::mse_loss(recon, batch.obs);
  const nn::LossValue inv = nn::cross_entropy_loss(inv_logits, one_hot(batch.actions));

  SrlLossTerms terms;
  terms.reconstruction = rec.value;
  terms.inverse = inv.value;
  terms.total = model.w_rec * rec.value + model.w_inv * inv.value;
  if (!grads) return terms;

  const nn::Matrix d_state_dec =
      nn::backward_from_logits(model.params, model.decoder, dec_tape, model.w_rec * rec.d_output, *grads, true);
  const nn::Matrix d_pair =
      nn::backward_from_logits(model.params, model.inverse, inv_tape, model.w_inv * inv.d_output, *grads, true);
  nn::Matrix d_states(2 * b, d);
  if (model.inverse_on_difference) {
    d_states.topRows(b) = d_state_dec - d_pair;
    d_states.bottomRows(b) = d_pair;
  } else {
    d_states.topRows(b) = d_state_dec + d_pair.leftCols(d);
    d_states.bottomRows(b) = d_pair.rightCols(d);
  }
  nn::backward_from_logits(model.params, model.encoder, enc_tape, d_states, *grads, false);
  return terms;
}

}  // namespace

SrlLossTerms srl_loss(const SrlModel& model, const SrlBatch& batch) {
  return evaluate(model, batch, nullptr);
}

SrlLossTerms srl_loss_grad(const SrlModel& model, const SrlBatch& batch, nn::ParamSet& grads) {
  model.params.check_aligned(grads, "srl_loss_grad");
  return evaluate(model, batch, &grads);
}

nn::Matrix preprocess_frames(const RandomDataset& data, const Preprocessor& pre) {
  nn::Matrix out(static_cast<Eigen::Index>(data.frames.size()), pre.feature_size());
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    pre.apply(data.frames[i], std::span<double>(out.row(static_cast<Eigen::Index>(i)).data(),
                                                static_cast<std::size_t>(out.cols())));
  }
  return out;
}

SrlBatch make_batch(const RandomDataset& data, const nn::Matrix& frames,
                    std::span<const std::size_t> indices) {
  SrlBatch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.obs.resize(n, frames.cols());
  b.next_obs.resize(n, frames.cols());
  b.actions.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const RandomTransition& t = data.transitions[indices[i]];
    b.obs.row(static_cast<Eigen::Index>(i)) = frames.row(t.obs);
    b.next_obs.row(static_cast<Eigen::Index>(i)) = frames.row(t.next_obs);
    b.actions[i] = t.action;
  }
  return b;
}

SrlTrainResult train_srl(const RandomDataset& data, const SrlConfig& config, std::uint64_t seed,
                         std::span<const std::size_t> indices) {
  config.validate();
  if (data.size() == 0) throw_usage("train_srl: empty dataset");
  Preprocessor pre = Preprocessor::for_image(data.height, data.width, config.grid);
  pre.foreground = config.foreground;
  pre.blur_sigma = config.blur_sigma;
  Rng rng(seed);
  SrlTrainResult result{SrlModel::create(config, pre, rng), {}};
  SrlModel& model = result.model;

  std::vector<std::size_t> order;
  if (indices.empty()) {
    order.resize(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  } else {
    order.assign(indices.begin(), indices.end());
  }
  for (std::size_t i : order) {
    if (i >= data.size()) throw_usage("train_srl: transition index out of range");
  }

  // Input and feature standardization are fitted on the frames used for training.
  nn::Matrix frames = preprocess_frames(data, pre);
  std::vector<char> used(data.frames.size(), 0);
  for (std::size_t i : order) {
    used[data.transitions[i].obs] = 1;
    used[data.transitions[i].next_obs] = 1;
  }
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i]) rows.push_back(static_cast<Eigen::Index>(i));
  }
  nn::Matrix subset(static_cast<Eigen::Index>(rows.size()), frames.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) subset.row(static_cast<Eigen::Index>(i)) = frames.row(rows[i]);
  model.pre.fit(subset);
  model.pre.standardize(frames);

  nn::OptState opt = nn::make_opt_state(model.params, {config.learning_rate});
  nn::ParamSet grads = model.params.zeros_like();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const SrlBatch mb = make_batch(data, frames, std::span(order).subspan(start, len));
      grads.set_zero();
      const SrlLossTerms terms = srl_loss_grad(model, mb, grads);
      if (!std::isfinite(terms.total)) {
        throw_numeric("train_srl: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += terms.total * static_cast<double>(len);
      nn::opt_step_inplace(model.params, grads, opt);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  model.fit_standardization(subset);
  // Round to checkpoint precision so saved and in-memory encoders agree.
  model = SrlModel::from_checkpoint(nn::quantize_f32(model.to_checkpoint()));
  return result;
}

double inverse_accuracy(const SrlModel& model, const RandomDataset& data,
                        std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  const nn::Matrix frames = preprocess_frames(data, model.pre);
  const SrlBatch b = make_batch(data, frames, indices);
  nn::Matrix stacked(2 * b.obs.rows(), b.obs.cols());
  stacked.topRows(b.obs.rows()) = b.obs;
  stacked.bottomRows(b.obs.rows()) = b.next_obs;
  const nn::Matrix s = model.encode_raw(stacked);
  const Eigen::Index n = b.obs.rows();
  const nn::Matrix z = nn::logits(model.params, model.inverse, inverse_input(model, s.topRows(n), s.bottomRows(n)));
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);
    if (best == b.actions[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace crlab::srl
