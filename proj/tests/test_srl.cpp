#include <doctest.h>

#include <cmath>

#include "srl/preprocess.hpp"
#include "srl/random_dataset.hpp"
#include "srl/srl_model.hpp"
#include "support.hpp"

using namespace crlab;
using namespace crlab::srl;

namespace {

SrlConfig small_config() {
  SrlConfig cfg;
  cfg.state_dim = 4;
  cfg.encoder_hidden = {16};
  cfg.inverse_hidden = {8};
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.grid = 8;
  cfg.blur_sigma = 1.0;
  return cfg;
}

RandomDataset small_dataset(std::int64_t steps, std::uint64_t seed) {
  sim::TaskSpec task = sim::TaskSpec::defaults(sim::TaskKind::kTargetReaching);
  task.image_size = 32;
  sim::RandomizationSpec rand;
  rand.enabled = true;
  sim::Env env(task, rand);
  return collect_random_dataset(env, 0, steps, seed);
}

}  // namespace

TEST_CASE("preprocessing subtracts the background and pools") {
  sim::Observation obs;
  obs.height = obs.width = 4;
  obs.pixels.assign(4 * 4 * 3, 100);
  for (int c = 0; c < 3; ++c) obs.pixels[c] = 202;  // pixel (0, 0)
  Preprocessor pre = Preprocessor::for_image(4, 4, 2);
  pre.foreground = true;
  std::vector<double> out(static_cast<std::size_t>(pre.feature_size()));
  pre.pooled(obs, out);
  // Cell (0, 0) averages one 102-brighter pixel with three background pixels.
  CHECK(out[0] == doctest::Approx(102.0 / 255.0 / 4.0));
  for (std::size_t i = 3; i < out.size(); ++i) CHECK(out[i] == 0.0);

  sim::Observation wrong = obs;
  wrong.width = 3;
  CHECK(test::error_kind_of([&] { pre.check(wrong); }) == ErrorKind::kUsage);
}

TEST_CASE("random dataset size, sharing and codec") {
  const RandomDataset d = small_dataset(300, 4);
  CHECK(d.size() == 300);
  CHECK(d.frames.size() == 301 + 300 / 250);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    if (d.transitions[i].next_obs == d.transitions[i + 1].obs) continue;
    CHECK(i == 249);  // episode boundary
  }
  const auto bytes = encode_random_dataset(d);
  const RandomDataset back = decode_random_dataset(bytes);
  CHECK(back.size() == d.size());
  CHECK(random_dataset_digest(back) == random_dataset_digest(d));
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.obs(i) == d.obs(i));
    CHECK(back.next_obs(i) == d.next_obs(i));
    CHECK(back.transitions[i].action == d.transitions[i].action);
  }
  auto bad = bytes;
  bad.resize(20);
  CHECK(test::error_kind_of([&] { decode_random_dataset(bad); }) == ErrorKind::kIo);
}

TEST_CASE("srl loss is the weighted sum of its terms") {
  Rng rng(3);
  const RandomDataset d = small_dataset(64, 1);
  SrlConfig cfg = small_config();
  cfg.w_rec = 1.0;
  cfg.w_inv = 2.0;
  Preprocessor pre = Preprocessor::for_image(32, 32, cfg.grid);
  const SrlModel m = SrlModel::create(cfg, pre, rng);
  const nn::Matrix frames = preprocess_frames(d, m.pre);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const SrlBatch b = make_batch(d, frames, idx);
  const SrlLossTerms t = srl_loss(m, b);
  CHECK(t.total == doctest::Approx(1.0 * t.reconstruction + 2.0 * t.inverse));
  CHECK(t.inverse > 0.0);
  nn::ParamSet g = m.params.zeros_like();
  const SrlLossTerms tg = srl_loss_grad(m, b, g);
  CHECK(tg.total == doctest::Approx(t.total));
}

TEST_CASE("srl training lowers the loss, is deterministic and round-trips") {
  const RandomDataset d = small_dataset(400, 2);
  const SrlConfig cfg = small_config();
  const SrlTrainResult a = train_srl(d, cfg, 5);
  const SrlTrainResult b = train_srl(d, cfg, 5);
  REQUIRE(a.epoch_loss.size() == 3);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  CHECK(a.model.params == b.model.params);

  const SrlModel back = SrlModel::from_checkpoint(a.model.to_checkpoint());
  const std::vector<double> s1 = a.model.encode(d.obs(7));
  const std::vector<double> s2 = back.encode(d.obs(7));
  REQUIRE(s1.size() == 4);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);

  std::vector<std::size_t> all(d.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double acc = inverse_accuracy(a.model, d, all);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("srl config validation") {
  SrlConfig cfg = small_config();
  cfg.state_dim = 0;
  CHECK(test::error_kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
  cfg = small_config();
  cfg.learning_rate = -1.0;
  CHECK(test::error_kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
}
