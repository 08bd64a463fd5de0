#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "distill/distill.hpp"
#include "nn/checkpoint.hpp"
#include "support.hpp"

using namespace crlab;
using namespace crlab::distill;

namespace {

DistillRecord record(std::uint8_t fill, std::array<float, 4> probs, std::uint8_t task, int h = 8, int w = 8) {
  DistillRecord r;
  r.obs.height = h;
  r.obs.width = w;
  r.obs.pixels.assign(static_cast<std::size_t>(h) * w * 3, fill);
  r.teacher_probs = probs;
  r.greedy_action = static_cast<std::uint8_t>(greedy_of(probs));
  r.task_id = task;
  return r;
}

DistillDataset dataset(std::uint8_t task, int n, std::uint8_t fill = 100) {
  DistillDataset d;
  d.height = d.width = 8;
  for (int i = 0; i < n; ++i) {
    auto r = record(static_cast<std::uint8_t>(fill + i), {0.1f, 0.2f, 0.6f, 0.1f}, task);
    r.episode = static_cast<std::uint32_t>(i / 3);
    r.step = static_cast<std::uint16_t>(i % 3);
    d.records.push_back(r);
  }
  d.provenance.push_back({task, 0xabcULL + task, 7, 0});
  return d;
}

StudentConfig small_student() {
  StudentConfig cfg;
  cfg.hidden = {16};
  cfg.grid = 4;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-2;
  return cfg;
}

// Teacher whose greedy action always moves towards the target.
ppo::PolicyNet homing_teacher() {
  ppo::PpoConfig cfg;
  cfg.hidden = {2};
  Rng rng(0);
  ppo::PolicyNet p = ppo::PolicyNet::create(2, cfg, rng);
  for (auto& e : p.params.entries()) std::fill(e.values.begin(), e.values.end(), 0.0);
  p.params.at("actor.l0.w").values = {1, 0, 0, 1};  // identity on (zx, zy)
  // Positive zx favours Left, positive zy favours Down.
  p.params.at("actor.l1.w").values = {5, -5, 0, 0, 0, 0, -5, 5};
  return p;
}

}  // namespace

TEST_CASE("codec round trip") {
  DistillDataset d = merge_datasets(std::vector<DistillDataset>{dataset(0, 5), dataset(1, 4, 30)});
  const auto bytes = encode_distill_dataset(d);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 4, "CRLD"));
  const DistillDataset back = decode_distill_dataset(bytes);
  CHECK(back == d);
  CHECK(back.task_counts() == std::map<int, std::size_t>{{0, 5}, {1, 4}});
  auto bad = bytes;
  bad.pop_back();
  CHECK(test::error_kind_of([&] { decode_distill_dataset(bad); }) == ErrorKind::kIo);

  const auto dir = test::scratch_dir("distill_codec");
  save_distill_dataset(d, dir / "d.crld");
  CHECK(load_distill_dataset(dir / "d.crld") == d);
}

TEST_CASE("augmentation") {
  const DistillDataset d = dataset(0, 3, 200);
  const std::vector<double> identity{1.0};
  const DistillDataset same = augment_luminosity(d, identity);
  REQUIRE(same.records.size() == 6);
  for (int i = 0; i < 3; ++i) CHECK(same.records[3 + i].obs == d.records[i].obs);

  const std::vector<double> factors{0.7, 1.3};
  const DistillDataset a = augment_luminosity(d, factors);
  CHECK(a.records.size() == 9);
  CHECK(a.records[6].obs.pixels[0] == 255);  // 200 * 1.3 clamps
  CHECK(a.records[3].obs.pixels[0] == 140);  // 200 * 0.7
  for (const auto& r : a.records) CHECK(r.teacher_probs == d.records[0].teacher_probs);
  int flagged = 0;
  for (const auto& p : a.provenance) flagged += p.augmented != 0;
  CHECK(flagged == 2);

  const std::vector<double> bad{1.6};
  CHECK(test::error_kind_of([&] { augment_luminosity(d, bad); }) == ErrorKind::kConfig);
}

TEST_CASE("merge") {
  const DistillDataset a = dataset(0, 4), b = dataset(1, 3, 10);
  const DistillDataset ab = merge_datasets(std::vector<DistillDataset>{a, b});
  const DistillDataset ba = merge_datasets(std::vector<DistillDataset>{b, a});
  CHECK(ab.records.size() == 7);
  CHECK(ab.task_counts() == std::map<int, std::size_t>{{0, 4}, {1, 3}});
  CHECK(ab.provenance.size() == 2);
  CHECK(std::is_permutation(ab.records.begin(), ab.records.end(), ba.records.begin()));
  CHECK(merge_datasets(std::vector<DistillDataset>{a}) == a);

  DistillDataset other = dataset(1, 2);
  other.height = other.width = 4;
  for (auto& r : other.records) r.obs = record(1, {0.25f, 0.25f, 0.25f, 0.25f}, 1, 4, 4).obs;
  CHECK(test::error_kind_of([&] { merge_datasets(std::vector<DistillDataset>{a, other}); }) ==
        ErrorKind::kUsage);
}

TEST_CASE("labels are re-verifiable") {
  CHECK(greedy_of(std::array<float, 4>{0.25f, 0.25f, 0.25f, 0.25f}) == 0);
  DistillDataset d = dataset(0, 2);
  d.validate();
  d.records[1].greedy_action = 0;
  CHECK(test::error_kind_of([&] { d.validate(); }) == ErrorKind::kUsage);
}

TEST_CASE("generation caps, contact limit and episode length") {
  const ppo::PolicyNet teacher = homing_teacher();
  ppo::FeatureMap features{2, [](const sim::Env& env) {
                             const auto z = env.state().relative();
                             return std::vector<double>{z.x, z.y};
                           }};
  GenerationConfig cfg;
  cfg.size_cap = 1000;
  const auto reach = sim::TaskSpec::defaults(sim::TaskKind::kTargetReaching);
  const GenerationResult r = generate_distill_dataset(teacher, features, reach, cfg, 1, 2);
  CHECK(r.data.records.size() == 1000);
  std::size_t total = 0;
  for (const auto& e : r.episodes) {
    CHECK(e.contacts <= kReachContactLimit);
    total += static_cast<std::size_t>(e.records);
  }
  CHECK(total == 1000);
  CHECK(r.episodes.front().contacts == kReachContactLimit);
  CHECK(r.episodes.front().records < 250);
  r.data.validate();

  cfg.task_id = 1;
  cfg.size_cap = 600;
  const auto circle = sim::TaskSpec::defaults(sim::TaskKind::kTargetCircling);
  const GenerationResult c = generate_distill_dataset(teacher, features, circle, cfg, 1, 2);
  CHECK(c.data.records.size() == 600);
  REQUIRE(c.episodes.size() == 3);
  CHECK(c.episodes[0].records == 250);
  CHECK(c.episodes[1].records == 250);
  CHECK(c.episodes[2].records == 100);
  CHECK(c.data.task_counts() == std::map<int, std::size_t>{{1, 600}});

  ppo::FeatureMap wrong{3, [](const sim::Env&) { return std::vector<double>{0, 0, 0}; }};
  CHECK(test::error_kind_of([&] { generate_distill_dataset(teacher, wrong, circle, cfg, 1, 2); }) ==
        ErrorKind::kUsage);
}

TEST_CASE("zero student is uniform with lowest-index action") {
  const StudentPolicy s = StudentPolicy::zeros(StudentConfig{}, srl::Preprocessor::for_image(64, 64, 16));
  sim::Observation obs;
  obs.height = obs.width = 64;
  obs.pixels.assign(64 * 64 * 3, 77);
  const StudentAction a = student_act(s, obs);
  for (double p : a.probs) CHECK(p == doctest::Approx(0.25));
  CHECK(a.greedy_action == 0);
  obs.width = 32;
  obs.pixels.resize(64 * 32 * 3);
  CHECK(test::error_kind_of([&] { student_act(s, obs); }) == ErrorKind::kUsage);
}

TEST_CASE("student input specification holds image dimensions only") {
  Rng rng(1);
  const StudentPolicy s = StudentPolicy::create(StudentConfig{}, srl::Preprocessor::for_image(64, 64, 16), rng);
  const nn::ParamSet ck = s.to_checkpoint();
  const auto& spec = ck.at("student.input_spec");
  CHECK(spec.values == std::vector<double>{64, 64});
  for (const auto& e : ck.entries()) {
    CHECK(e.name.find("task") == std::string::npos);
  }
  CHECK(StudentPolicy::from_checkpoint(ck).params == s.params);
  const StudentPolicy stored = StudentPolicy::from_checkpoint(nn::decode_checkpoint(nn::encode_checkpoint(ck)));
  CHECK(stored.params == nn::quantize_f32(s.params));
}

TEST_CASE("student overfits two records and is deterministic") {
  DistillDataset d;
  d.height = d.width = 8;
  d.records.push_back(record(40, {1, 0, 0, 0}, 0));
  d.records.push_back(record(220, {0, 0, 0, 1}, 0));
  for (int c = 0; c < 3; ++c) d.records[1].obs.pixels[static_cast<std::size_t>(c)] = 0;
  const StudentTrainResult a = train_student(d, small_student(), 3);
  const StudentTrainResult b = train_student(d, small_student(), 3);
  CHECK(a.student.params == b.student.params);
  CHECK(student_act(a.student, d.records[0].obs).greedy_action == 0);
  CHECK(student_act(a.student, d.records[1].obs).greedy_action == 3);
  const SoftTargetFit fit = soft_target_fit(a.student, d);
  CHECK(fit.cross_entropy >= fit.teacher_entropy);
  CHECK(fit.cross_entropy - fit.teacher_entropy < 0.01);
}

TEST_CASE("uniform targets drive the loss to ln 4") {
  DistillDataset d = dataset(0, 8);
  for (auto& r : d.records) {
    r.teacher_probs = {0.25f, 0.25f, 0.25f, 0.25f};
    r.greedy_action = 0;
  }
  StudentConfig cfg = small_student();
  cfg.epochs = 60;
  const StudentTrainResult t = train_student(d, cfg, 1);
  CHECK(t.loss_curve.points.back().y == doctest::Approx(std::log(4.0)).epsilon(1e-3));
  const SoftTargetFit fit = soft_target_fit(t.student, d);
  CHECK(fit.teacher_entropy == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  DistillDataset empty;
  CHECK(test::error_kind_of([&] { train_student(empty, cfg, 1); }) == ErrorKind::kUsage);
}
