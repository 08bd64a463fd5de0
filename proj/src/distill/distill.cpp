#include "distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/binio.hpp"
#include "common/error.hpp"
#include "common/hash.hpp"
#include "nn/adam.hpp"
#include "nn/loss.hpp"

namespace crlab::distill {

int greedy_of(std::span<const float> probs) { return ppo::argmax_lowest(probs); }

std::map<int, std::size_t> DistillDataset::task_counts() const {
  std::map<int, std::size_t> counts;
  for (const auto& r : records) ++counts[r.task_id];
  return counts;
}

void DistillDataset::validate() const {
  const std::size_t pixels = static_cast<std::size_t>(height) * width * 3;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DistillRecord& r = records[i];
    const std::string where = "distill record " + std::to_string(i);
    if (r.obs.height != height || r.obs.width != width || r.obs.pixels.size() != pixels) {
      throw_usage(where + ": observation shape mismatch");
    }
    double total = 0.0;
    for (float p : r.teacher_probs) {
      if (!(p >= 0.0f)) throw_usage(where + ": negative or non-finite probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw_usage(where + ": probabilities do not sum to 1");
    if (r.greedy_action != greedy_of(r.teacher_probs)) {
      throw_usage(where + ": greedy action is not the argmax of the probabilities");
    }
  }
}

namespace {

// f32 probabilities renormalized in double so the stored vector sums to 1.
std::array<float, 4> to_f32_probs(const std::array<double, 4>& p) {
  std::array<float, 4> out{};
  double total = 0.0;
  for (std::size_t a = 0; a < 4; ++a) total += p[a];
  for (std::size_t a = 0; a < 4; ++a) out[a] = static_cast<float>(p[a] / total);
  return out;
}

}  // namespace

GenerationResult generate_distill_dataset(const ppo::PolicyNet& teacher, const ppo::FeatureMap& features,
                                          const sim::TaskSpec& task, const GenerationConfig& config,
                                          std::uint64_t teacher_digest, std::uint64_t seed) {
  if (teacher.feature_dim() != features.dim) {
    throw_usage("generate_distill_dataset: teacher input size " + std::to_string(teacher.feature_dim()) +
                " does not match encoder output size " + std::to_string(features.dim));
  }
  if (config.size_cap < 1) throw_config("distill.size_cap must be >= 1");
  if (config.task_id < 0 || config.task_id > 255) throw_config("distill task id must lie in [0, 255]");
  sim::Env env(task, config.randomization);
  Rng action_rng(derive_seed(seed, "distill-actions"));
  GenerationResult out;
  out.data.height = task.image_size;
  out.data.width = task.image_size;
  out.data.provenance.push_back({static_cast<std::uint8_t>(config.task_id), teacher_digest, seed, 0});
  const auto cap = static_cast<std::size_t>(config.size_cap);
  out.data.records.reserve(cap);
  const bool reaching = task.kind == sim::TaskKind::kTargetReaching;
  for (std::uint32_t episode = 0; out.data.records.size() < cap; ++episode) {
    env.reset(derive_seed(seed, episode));
    EpisodeStats stats{episode, 0, 0};
    while (!env.done() && out.data.records.size() < cap) {
      const std::vector<double> f = features.fn(env);
      const std::array<float, 4> probs = to_f32_probs(teacher.probs(f));
      DistillRecord r;
      r.obs = env.observation();
      r.teacher_probs = probs;
      r.greedy_action = static_cast<std::uint8_t>(greedy_of(probs));
      r.task_id = static_cast<std::uint8_t>(config.task_id);
      r.episode = episode;
      r.step = static_cast<std::uint16_t>(env.state().step_index);
      const int action = config.stochastic ? action_rng.categorical(std::span<const float>(probs))
                                           : r.greedy_action;
      out.data.records.push_back(std::move(r));
      ++stats.records;
      const sim::Env::Transition t = env.step(static_cast<sim::Action>(action));
      if (t.contact) ++stats.contacts;
      if (reaching && stats.contacts >= kReachContactLimit) break;
    }
    out.episodes.push_back(stats);
  }
  return out;
}

DistillDataset augment_luminosity(const DistillDataset& data, std::span<const double> factors) {
  for (double f : factors) {
    if (!(f >= 0.5 && f <= 1.5)) throw_config("luminosity factors must lie in [0.5, 1.5]");
  }
  DistillDataset out;
  out.height = data.height;
  out.width = data.width;
  out.provenance = data.provenance;
  out.records.reserve(data.records.size() * (factors.size() + 1));
  out.records = data.records;
  for (double f : factors) {
    std::array<std::uint8_t, 256> lut;
    for (int v = 0; v < 256; ++v) lut[v] = sim::scale_channel(static_cast<std::uint8_t>(v), f);
    for (const DistillRecord& r : data.records) {
      DistillRecord copy = r;
      for (auto& p : copy.obs.pixels) p = lut[p];
      out.records.push_back(std::move(copy));
    }
    for (Provenance p : data.provenance) {
      p.augmented = 1;
      out.provenance.push_back(p);
    }
  }
  return out;
}

DistillDataset merge_datasets(std::span<const DistillDataset> parts) {
  if (parts.empty()) throw_usage("merge_datasets: no datasets given");
  DistillDataset out;
  out.height = parts.front().height;
  out.width = parts.front().width;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.height != out.height || p.width != out.width) {
      throw_usage("merge_datasets: observation sizes differ (" + std::to_string(p.height) + "x" +
                  std::to_string(p.width) + " vs " + std::to_string(out.height) + "x" +
                  std::to_string(out.width) + ")");
    }
    total += p.records.size();
  }
  out.records.reserve(total);
  for (const auto& p : parts) {
    out.records.insert(out.records.end(), p.records.begin(), p.records.end());
    out.provenance.insert(out.provenance.end(), p.provenance.begin(), p.provenance.end());
  }
  return out;
}

std::uint64_t combined_teacher_digest(const DistillDataset& data) {
  if (data.provenance.size() == 1) return data.provenance.front().teacher_digest;
  ByteWriter w;
  for (const auto& p : data.provenance) w.u64(p.teacher_digest);
  return fnv1a64(w.data());
}

std::uint64_t combined_seed(const DistillDataset& data) {
  if (data.provenance.size() == 1) return data.provenance.front().seed;
  ByteWriter w;
  for (const auto& p : data.provenance) w.u64(p.seed);
  return fnv1a64(w.data());
}

std::vector<std::uint8_t> encode_distill_dataset(const DistillDataset& data) {
  const auto counts = data.task_counts();
  const int slots = counts.empty() ? 0 : counts.rbegin()->first + 1;
  ByteWriter w;
  w.magic("CRLD");
  w.u32(kDistillDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.height));
  w.u32(static_cast<std::uint32_t>(data.width));
  w.u32(static_cast<std::uint32_t>(data.records.size()));
  w.u32(static_cast<std::uint32_t>(slots));
  for (int t = 0; t < slots; ++t) {
    const auto it = counts.find(t);
    w.u32(static_cast<std::uint32_t>(it == counts.end() ? 0 : it->second));
  }
  w.u64(combined_teacher_digest(data));
  w.u64(combined_seed(data));
  w.u32(static_cast<std::uint32_t>(data.provenance.size()));
  for (const auto& p : data.provenance) {
    w.u8(p.task_id);
    w.u64(p.teacher_digest);
    w.u64(p.seed);
    w.u8(p.augmented);
  }
  for (const auto& r : data.records) {
    w.bytes(r.obs.pixels);
    for (float p : r.teacher_probs) w.f32(p);
    w.u8(r.greedy_action);
    w.u8(r.task_id);
    w.u32(r.episode);
    w.u16(r.step);
  }
  return w.take();
}

DistillDataset decode_distill_dataset(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader rd(bytes, what);
  rd.expect_magic("CRLD");
  const std::uint32_t version = rd.u32();
  if (version != kDistillDatasetVersion) throw_io(what + ": unsupported version " + std::to_string(version));
  DistillDataset data;
  data.height = static_cast<int>(rd.u32());
  data.width = static_cast<int>(rd.u32());
  const std::uint32_t count = rd.u32();
  const std::uint32_t slots = rd.u32();
  if (slots > 256) throw_io(what + ": too many task slots");
  std::vector<std::uint32_t> header_counts(slots);
  for (auto& c : header_counts) c = rd.u32();
  const std::uint64_t digest = rd.u64();
  const std::uint64_t seed = rd.u64();
  const std::uint32_t n_prov = rd.u32();
  if (n_prov > rd.remaining() / 18) throw_io(what + ": truncated data");
  for (std::uint32_t i = 0; i < n_prov; ++i) {
    Provenance p;
    p.task_id = rd.u8();
    p.teacher_digest = rd.u64();
    p.seed = rd.u64();
    p.augmented = rd.u8();
    data.provenance.push_back(p);
  }
  const std::size_t pixels = static_cast<std::size_t>(data.height) * data.width * 3;
  if (pixels == 0 && count > 0) throw_io(what + ": empty observation shape");
  if (count > 0 && rd.remaining() / (pixels + 24) < count) throw_io(what + ": truncated data");
  data.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    DistillRecord r;
    r.obs.height = data.height;
    r.obs.width = data.width;
    const auto px = rd.bytes(pixels);
    r.obs.pixels.assign(px.begin(), px.end());
    for (float& p : r.teacher_probs) p = rd.f32();
    r.greedy_action = rd.u8();
    r.task_id = rd.u8();
    r.episode = rd.u32();
    r.step = rd.u16();
    data.records.push_back(std::move(r));
  }
  if (!rd.at_end()) throw_io(what + ": trailing bytes");
  const auto counts = data.task_counts();
  for (std::uint32_t t = 0; t < slots; ++t) {
    const auto it = counts.find(static_cast<int>(t));
    if (header_counts[t] != (it == counts.end() ? 0 : it->second)) {
      throw_io(what + ": per-task count mismatch for task " + std::to_string(t));
    }
  }
  if (digest != combined_teacher_digest(data) || seed != combined_seed(data)) {
    throw_io(what + ": provenance header mismatch");
  }
  return data;
}

std::uint64_t save_distill_dataset(const DistillDataset& data, const std::filesystem::path& path) {
  const auto bytes = encode_distill_dataset(data);
  write_file(path, bytes);
  return fnv1a64(bytes);
}

DistillDataset load_distill_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_distill_dataset(bytes, path.string());
}

void StudentConfig::validate() const {
  if (hidden.empty()) throw_config("student.hidden must list at least one layer");
  for (int h : hidden) {
    if (h < 1) throw_config("student.hidden sizes must be >= 1");
  }
  if (epochs < 1) throw_config("student.epochs must be >= 1");
  if (batch_size < 1) throw_config("student.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw_config("student.learning_rate must be positive");
  if (blur_sigma < 0.0) throw_config("student.blur_sigma must be non-negative");
}

namespace {

nn::NetworkSpec student_spec(const StudentConfig& config, int input) {
  nn::NetworkSpec spec{"student", {input}, nn::Activation::kReLU, nn::Head::kSoftmax};
  for (int h : config.hidden) spec.layers.push_back(h);
  spec.layers.push_back(sim::kNumActions);
  return spec;
}

}  // namespace

StudentPolicy StudentPolicy::create(const StudentConfig& config, srl::Preprocessor pre, Rng& rng) {
  config.validate();
  StudentPolicy s;
  s.pre = std::move(pre);
  s.net = student_spec(config, s.pre.feature_size());
  s.params = nn::init_params(s.net, rng);
  return s;
}

StudentPolicy StudentPolicy::zeros(const StudentConfig& config, srl::Preprocessor pre) {
  Rng rng(0);
  StudentPolicy s = create(config, std::move(pre), rng);
  s.params.set_zero();
  return s;
}

nn::ParamSet StudentPolicy::to_checkpoint() const {
  nn::ParamSet out = params;
  out.add("student.input_spec", {2}, {static_cast<double>(pre.height), static_cast<double>(pre.width)});
  pre.store(out, "preprocess");
  return out;
}

StudentPolicy StudentPolicy::from_checkpoint(const nn::ParamSet& stored) {
  if (!stored.contains("student.input_spec")) throw_io("checkpoint is not a student policy");
  const auto& spec = stored.at("student.input_spec").values;
  StudentPolicy s;
  s.pre = srl::Preprocessor::load(stored, "preprocess");
  if (spec.size() != 2 || spec[0] != s.pre.height || spec[1] != s.pre.width) {
    throw_io("student checkpoint: input spec does not match preprocessing");
  }
  for (const auto& e : stored.entries()) {
    if (e.name.starts_with("student.l")) s.params.add(e.name, e.shape, e.values);
  }
  s.net = nn::infer_spec(s.params, "student", nn::Activation::kReLU, nn::Head::kSoftmax);
  if (s.net.input_size() != s.pre.feature_size() || s.net.output_size() != sim::kNumActions) {
    throw_io("student checkpoint: network shape does not match preprocessing");
  }
  return s;
}

nn::Matrix StudentPolicy::logits(const nn::Matrix& preprocessed) const {
  return nn::logits(params, net, preprocessed);
}

StudentAction student_act(const StudentPolicy& student, const sim::Observation& obs) {
  const nn::Matrix p = nn::softmax_rows(student.logits(student.pre.apply(obs)));
  StudentAction out;
  for (int a = 0; a < sim::kNumActions; ++a) out.probs[static_cast<std::size_t>(a)] = p(0, a);
  out.greedy_action = ppo::argmax_lowest(std::span<const double>(out.probs));
  return out;
}

namespace {

nn::Matrix pooled_rows(const DistillDataset& data, const srl::Preprocessor& pre) {
  nn::Matrix rows(static_cast<Eigen::Index>(data.records.size()), pre.feature_size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    pre.pooled(data.records[i].obs,
               std::span<double>(rows.row(static_cast<Eigen::Index>(i)).data(),
                                 static_cast<std::size_t>(rows.cols())));
  }
  return rows;
}

nn::Matrix target_rows(const DistillDataset& data) {
  nn::Matrix t(static_cast<Eigen::Index>(data.records.size()), sim::kNumActions);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    for (int a = 0; a < sim::kNumActions; ++a) {
      t(static_cast<Eigen::Index>(i), a) = data.records[i].teacher_probs[static_cast<std::size_t>(a)];
    }
  }
  return t;
}

}  // namespace

StudentTrainResult train_student(const DistillDataset& data, const StudentConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  if (data.records.empty()) throw_usage("train_student: empty dataset");
  srl::Preprocessor pre = srl::Preprocessor::for_image(data.height, data.width, config.grid);
  pre.blur_sigma = config.blur_sigma;
  nn::Matrix inputs = pooled_rows(data, pre);
  pre.fit(inputs);
  const nn::Matrix targets = target_rows(data);

  Rng rng(seed);
  StudentTrainResult result{StudentPolicy::create(config, pre, rng), {}};
  StudentPolicy& student = result.student;
  result.loss_curve.name = "soft_cross_entropy";
  result.loss_curve.x_label = "epoch";

  nn::OptState opt = nn::make_opt_state(student.params, {config.learning_rate});
  std::vector<Eigen::Index> order(data.records.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      nn::Matrix x(static_cast<Eigen::Index>(len), inputs.cols());
      nn::LossTargets t;
      t.dense.resize(static_cast<Eigen::Index>(len), sim::kNumActions);
      for (std::size_t i = 0; i < len; ++i) {
        x.row(static_cast<Eigen::Index>(i)) = inputs.row(order[start + i]);
        t.dense.row(static_cast<Eigen::Index>(i)) = targets.row(order[start + i]);
      }
      nn::Gradients g = nn::backward(student.params, student.net, x, nn::LossKind::kCrossEntropy, t);
      if (!std::isfinite(g.loss)) {
        throw_numeric("train_student: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += g.loss * static_cast<double>(len);
      nn::opt_step_inplace(student.params, g.grads, opt);
    }
    result.loss_curve.points.push_back({static_cast<double>(epoch), loss_sum / static_cast<double>(order.size()), {}});
  }
  student = StudentPolicy::from_checkpoint(nn::quantize_f32(student.to_checkpoint()));
  return result;
}

SoftTargetFit soft_target_fit(const StudentPolicy& student, const DistillDataset& data) {
  if (data.records.empty()) throw_usage("soft_target_fit: empty dataset");
  nn::Matrix x = pooled_rows(data, student.pre);
  student.pre.standardize(x);
  const nn::Matrix t = target_rows(data);
  SoftTargetFit fit;
  fit.cross_entropy = nn::cross_entropy_loss(student.logits(x), t).value;
  double h = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index a = 0; a < t.cols(); ++a) {
      if (t(i, a) > 0.0) h -= t(i, a) * std::log(t(i, a));
    }
  }
  fit.teacher_entropy = h / static_cast<double>(t.rows());
  return fit;
}

}  // namespace crlab::distill
