#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "common/metric_series.hpp"
#include "distill/distill.hpp"
#include "ppo/ppo.hpp"
#include "sim/env.hpp"
#include "srl/random_dataset.hpp"
#include "srl/srl_model.hpp"

namespace crlab::store {
class RunDirectory;
}

namespace crlab::continual {

// Maps the environment's current observation to an action.
using Actor = std::function<int(const sim::Env&)>;

Actor teacher_actor(const ppo::PolicyNet& teacher, const srl::SrlModel& encoder);
Actor student_actor(const distill::StudentPolicy& student);
Actor random_actor(std::uint64_t seed);

inline constexpr int kDefaultAnchorEpisodes = 20;
inline constexpr double kReportClampLo = -0.5;
inline constexpr double kReportClampHi = 1.5;

// Normalization anchors: random policy maps to 0, reference policy to 1.
struct Anchors {
  double random_mean = 0.0;
  double teacher_mean = 1.0;
};

double normalize(double raw, const Anchors& anchors);
double clamp_report(double normalized);

struct EvalReport {
  std::string task;
  std::vector<double> episode_rewards;
  double raw_mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(n)
  Anchors anchors;
  double normalized = 0.0;         // unclamped
  double normalized_err = 0.0;     // std_error in normalized units
};

// Greedy 250-step rollouts from start seeds derive_seed(seed, e), rendering
// without randomization.
std::vector<double> rollout_rewards(const Actor& actor, const sim::TaskSpec& task, int n_eval,
                                    std::uint64_t seed);

double mean_of(const std::vector<double>& v);
double std_error_of(const std::vector<double>& v);

// Mean reward of the uniform-random policy.
double random_anchor(const sim::TaskSpec& task, int episodes, std::uint64_t seed);

// With no anchors given, the random anchor is computed on the fly and the
// normalized fields are NaN (no reference policy is known).
EvalReport evaluate_policy(const Actor& actor, const sim::TaskSpec& task, int n_eval, std::uint64_t seed,
                           const std::optional<Anchors>& anchors = std::nullopt);

// Training-time access to tasks. Once a task is revoked its training
// environment and random dataset can no longer be obtained; evaluation
// environments stay available.
class TaskRegistry {
 public:
  struct Handle {
    int task_id = -1;
  };

  int add(sim::TaskSpec task, sim::RandomizationSpec randomization);
  Handle open(int task_id) const;

  // Access error (exit code 5) once the task has been revoked.
  sim::Env training_env(Handle h) const;
  void attach_random_data(Handle h, srl::RandomDataset data);
  const srl::RandomDataset& random_data(Handle h) const;
  sim::Env evaluation_env(int task_id) const;
  const sim::TaskSpec& task(int task_id) const;

  // Drops the random dataset and closes training access for good.
  void revoke(int task_id);
  bool revoked(int task_id) const;
  int size() const { return static_cast<int>(entries_.size()); }

 private:
  struct Entry {
    sim::TaskSpec task;
    sim::RandomizationSpec randomization;
    std::optional<srl::RandomDataset> data;
    bool revoked = false;
  };
  const Entry& entry(int task_id) const;
  void check_open(Handle h) const;
  std::vector<Entry> entries_;
};

struct ScenarioConfig {
  std::vector<sim::TaskSpec> tasks;
  sim::RandomizationSpec randomization{.enabled = true};  // data collection and PPO training
  std::int64_t random_steps = 20000;
  int random_episode_steps = 0;
  srl::SrlConfig srl;
  ppo::PpoConfig ppo;
  distill::GenerationConfig generation;
  distill::StudentConfig student;
  int n_eval = 5;
  int anchor_episodes = kDefaultAnchorEpisodes;
  std::uint64_t seed = 0;
  bool finetune_baseline = false;
  int curve_task = -1;     // task index for a checkpoint-distillation curve; -1 skips it
  int curve_students = 8;
  // Self-check: tries to open the first task's training environment while
  // training the second one, which must fail with an access error.
  bool probe_revoked_access = false;

  void validate() const;
};

struct TaskOutcome {
  srl::SrlModel encoder;
  ppo::TrainTaskResult training;
  std::uint64_t teacher_digest = 0;
  std::uint64_t random_digest = 0;
  double inverse_accuracy = 0.0;
  distill::GenerationResult distill;
  Anchors anchors;
  EvalReport teacher_report;
};

struct ForgettingEntry {
  std::string method;  // "FineTune" or "Distillation"
  int task = 0;
  double before = 0.0;
  double after = 0.0;
  double abs_drop = 0.0;
  double rel_drop = 0.0;
};

inline constexpr double kRelDropEps = 1e-9;
ForgettingEntry forgetting_entry(std::string method, int task, double before, double after);

struct CurveResult {
  MetricSeries teacher;  // report-clamped normalized teacher score per checkpoint
  MetricSeries student;  // mean report-clamped student score, y_err = std over seeds
  double mean_abs_gap = 0.0;
};

struct SequenceResult {
  std::vector<TaskOutcome> tasks;
  distill::DistillDataset merged;
  distill::StudentTrainResult student;
  std::vector<EvalReport> student_reports;
  std::vector<ForgettingEntry> forgetting;
  std::optional<CurveResult> curve;
};

// Stage-by-stage sequential protocol. When `run` is given every artifact is
// persisted there and stage statuses are tracked in its manifest.
SequenceResult run_sequence(const ScenarioConfig& config, store::RunDirectory* run = nullptr);

struct CurveConfig {
  distill::GenerationConfig generation;
  distill::StudentConfig student;
  int students = 8;
  int n_eval = 5;
  std::uint64_t seed = 0;
};

// Distills every checkpoint into `students` fresh students and scores teacher
// and students with the same protocol.
CurveResult checkpoint_distill_curve(const std::vector<ppo::PolicyCheckpoint>& checkpoints,
                                     const srl::SrlModel& encoder, const sim::TaskSpec& task,
                                     int task_id, const Anchors& anchors, const CurveConfig& config);

struct FinetuneResult {
  ppo::PolicyNet tuned;
  ForgettingEntry entry;
};

// Continues training `policy` on the next task through that task's encoder
// and scores it on the first task before and after.
FinetuneResult finetune_baseline(const ppo::PolicyNet& policy, const srl::SrlModel& first_encoder,
                                 const sim::TaskSpec& first_task, const Anchors& first_anchors,
                                 sim::Env next_env, const srl::SrlModel& next_encoder,
                                 const ppo::PpoConfig& config, int n_eval, std::uint64_t seed);

}  // namespace crlab::continual
