#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "common/metric_series.hpp"
#include "nn/mlp.hpp"
#include "ppo/ppo.hpp"
#include "sim/env.hpp"
#include "srl/preprocess.hpp"

namespace crlab::distill {

inline constexpr int kDefaultSizeCap = 10000;
inline constexpr int kReachContactLimit = 10;

struct DistillRecord {
  sim::Observation obs;
  std::array<float, 4> teacher_probs{};
  std::uint8_t greedy_action = 0;
  std::uint8_t task_id = 0;
  std::uint32_t episode = 0;
  std::uint16_t step = 0;

  bool operator==(const DistillRecord&) const = default;
};

// One contributing generation run (or augmentation of one).
struct Provenance {
  std::uint8_t task_id = 0;
  std::uint64_t teacher_digest = 0;
  std::uint64_t seed = 0;
  std::uint8_t augmented = 0;

  bool operator==(const Provenance&) const = default;
};

struct DistillDataset {
  int height = 0;
  int width = 0;
  std::vector<DistillRecord> records;
  std::vector<Provenance> provenance;

  // task id -> record count
  std::map<int, std::size_t> task_counts() const;
  // Label consistency of every record; throws a usage error on the first violation.
  void validate() const;

  bool operator==(const DistillDataset&) const = default;
};

int greedy_of(std::span<const float> probs);

struct GenerationConfig {
  int size_cap = kDefaultSizeCap;
  int task_id = 0;
  bool stochastic = false;  // sample teacher actions instead of acting greedily
  sim::RandomizationSpec randomization;
};

struct EpisodeStats {
  std::uint32_t episode = 0;
  int records = 0;
  int contacts = 0;
};

struct GenerationResult {
  DistillDataset data;
  std::vector<EpisodeStats> episodes;
};

// Rolls the teacher over its SRL features from random starts. Reaching
// episodes end after kReachContactLimit contact steps, circling episodes run
// to the step limit; collection stops at exactly size_cap records.
GenerationResult generate_distill_dataset(const ppo::PolicyNet& teacher, const ppo::FeatureMap& features,
                                          const sim::TaskSpec& task, const GenerationConfig& config,
                                          std::uint64_t teacher_digest, std::uint64_t seed);

// Originals followed by one scaled copy per factor.
DistillDataset augment_luminosity(const DistillDataset& data, std::span<const double> factors);

// Concatenation in the given order.
DistillDataset merge_datasets(std::span<const DistillDataset> parts);

inline constexpr std::uint32_t kDistillDatasetVersion = 1;

// "CRLD" | u32 version | u32 H, u32 W, u32 record count | u32 task slots, u32
// count per task id | u64 teacher digest, u64 seed | u32 provenance count,
// (u8 task, u64 digest, u64 seed, u8 augmented) each | records: obs u8[H*W*3],
// 4 x f32 probs, u8 greedy, u8 task, u32 episode, u16 step.
std::vector<std::uint8_t> encode_distill_dataset(const DistillDataset& data);
DistillDataset decode_distill_dataset(std::span<const std::uint8_t> bytes,
                                      const std::string& what = "distill dataset");
std::uint64_t combined_teacher_digest(const DistillDataset& data);
std::uint64_t combined_seed(const DistillDataset& data);

std::uint64_t save_distill_dataset(const DistillDataset& data, const std::filesystem::path& path);
DistillDataset load_distill_dataset(const std::filesystem::path& path);

struct StudentConfig {
  std::vector<int> hidden{256, 128};
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int grid = 16;
  double blur_sigma = 2.0;

  void validate() const;
};

// Observation-only policy: preprocessed pixels -> 4 action logits.
class StudentPolicy {
 public:
  static StudentPolicy create(const StudentConfig& config, srl::Preprocessor pre, Rng& rng);
  // All weights zero: uniform action probabilities.
  static StudentPolicy zeros(const StudentConfig& config, srl::Preprocessor pre);
  static StudentPolicy from_checkpoint(const nn::ParamSet& stored);
  nn::ParamSet to_checkpoint() const;

  nn::Matrix logits(const nn::Matrix& preprocessed) const;

  nn::ParamSet params;  // student.*
  nn::NetworkSpec net;
  srl::Preprocessor pre;
};

struct StudentAction {
  std::array<double, 4> probs{};
  int greedy_action = 0;
};

StudentAction student_act(const StudentPolicy& student, const sim::Observation& obs);

struct StudentTrainResult {
  StudentPolicy student;
  MetricSeries loss_curve;  // epoch -> mean soft cross-entropy
};

// Soft-target cross-entropy against the stored teacher probabilities.
StudentTrainResult train_student(const DistillDataset& data, const StudentConfig& config,
                                 std::uint64_t seed);

// Mean cross-entropy of the student against the stored probabilities and the
// mean entropy of those probabilities (the lower bound of the former).
struct SoftTargetFit {
  double cross_entropy = 0.0;
  double teacher_entropy = 0.0;
};
SoftTargetFit soft_target_fit(const StudentPolicy& student, const DistillDataset& data);

}  // namespace crlab::distill
