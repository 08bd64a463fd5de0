#include "continual/continual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "common/binio.hpp"
#include "common/error.hpp"
#include "common/hash.hpp"
#include "nn/checkpoint.hpp"
#include "store/manifest.hpp"
#include "store/plot.hpp"
#include "store/table.hpp"

namespace crlab::continual {

Actor teacher_actor(const ppo::PolicyNet& teacher, const srl::SrlModel& encoder) {
  if (teacher.feature_dim() != encoder.state_dim()) {
    throw_usage("teacher input size does not match encoder output size");
  }
  return [&teacher, &encoder](const sim::Env& env) {
    return teacher.greedy_action(encoder.encode(env.observation()));
  };
}

Actor student_actor(const distill::StudentPolicy& student) {
  return [&student](const sim::Env& env) { return distill::student_act(student, env.observation()).greedy_action; };
}

Actor random_actor(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const sim::Env&) { return static_cast<int>(rng->below(sim::kNumActions)); };
}

double normalize(double raw, const Anchors& anchors) {
  return (raw - anchors.random_mean) / (anchors.teacher_mean - anchors.random_mean);
}

double clamp_report(double normalized) { return std::clamp(normalized, kReportClampLo, kReportClampHi); }

std::vector<double> rollout_rewards(const Actor& actor, const sim::TaskSpec& task, int n_eval,
                                    std::uint64_t seed) {
  if (n_eval < 1) throw_config("n_eval must be >= 1");
  sim::Env env(task, sim::RandomizationSpec{});
  std::vector<double> rewards;
  rewards.reserve(static_cast<std::size_t>(n_eval));
  for (int e = 0; e < n_eval; ++e) {
    env.reset(derive_seed(seed, static_cast<std::uint64_t>(e)));
    double total = 0.0;
    while (!env.done()) {
      const int a = actor(env);
      if (a < 0 || a >= sim::kNumActions) throw_usage("actor returned invalid action " + std::to_string(a));
      total += env.step(static_cast<sim::Action>(a)).reward;
    }
    rewards.push_back(total);
  }
  return rewards;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_error_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

double random_anchor(const sim::TaskSpec& task, int episodes, std::uint64_t seed) {
  return mean_of(rollout_rewards(random_actor(derive_seed(seed, "random-anchor-actions")), task, episodes, seed));
}

EvalReport evaluate_policy(const Actor& actor, const sim::TaskSpec& task, int n_eval, std::uint64_t seed,
                           const std::optional<Anchors>& anchors) {
  EvalReport r;
  r.task = std::string(sim::task_name(task.kind));
  r.episode_rewards = rollout_rewards(actor, task, n_eval, seed);
  r.raw_mean = mean_of(r.episode_rewards);
  r.std_error = std_error_of(r.episode_rewards);
  if (anchors) {
    r.anchors = *anchors;
    r.normalized = normalize(r.raw_mean, r.anchors);
    r.normalized_err = r.std_error / std::abs(r.anchors.teacher_mean - r.anchors.random_mean);
  } else {
    r.anchors.random_mean = random_anchor(task, kDefaultAnchorEpisodes, seed);
    r.anchors.teacher_mean = std::numeric_limits<double>::quiet_NaN();
    r.normalized = std::numeric_limits<double>::quiet_NaN();
    r.normalized_err = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

int TaskRegistry::add(sim::TaskSpec task, sim::RandomizationSpec randomization) {
  task.validate();
  randomization.validate();
  entries_.push_back({std::move(task), randomization, std::nullopt, false});
  return static_cast<int>(entries_.size()) - 1;
}

const TaskRegistry::Entry& TaskRegistry::entry(int task_id) const {
  if (task_id < 0 || task_id >= size()) throw_usage("unknown task index " + std::to_string(task_id));
  return entries_[static_cast<std::size_t>(task_id)];
}

TaskRegistry::Handle TaskRegistry::open(int task_id) const {
  entry(task_id);
  return Handle{task_id};
}

void TaskRegistry::check_open(Handle h) const {
  if (entry(h.task_id).revoked) {
    throw_access("task " + std::to_string(h.task_id) +
                 " has been left behind: its training environment and random dataset are no longer available");
  }
}

sim::Env TaskRegistry::training_env(Handle h) const {
  check_open(h);
  const Entry& e = entry(h.task_id);
  return sim::Env(e.task, e.randomization);
}

void TaskRegistry::attach_random_data(Handle h, srl::RandomDataset data) {
  check_open(h);
  entries_[static_cast<std::size_t>(h.task_id)].data = std::move(data);
}

const srl::RandomDataset& TaskRegistry::random_data(Handle h) const {
  check_open(h);
  const Entry& e = entry(h.task_id);
  if (!e.data) throw_usage("task " + std::to_string(h.task_id) + " has no random dataset yet");
  return *e.data;
}

sim::Env TaskRegistry::evaluation_env(int task_id) const {
  return sim::Env(entry(task_id).task, sim::RandomizationSpec{});
}

const sim::TaskSpec& TaskRegistry::task(int task_id) const { return entry(task_id).task; }

void TaskRegistry::revoke(int task_id) {
  entry(task_id);
  Entry& e = entries_[static_cast<std::size_t>(task_id)];
  e.data.reset();
  e.revoked = true;
}

bool TaskRegistry::revoked(int task_id) const { return entry(task_id).revoked; }

void ScenarioConfig::validate() const {
  if (tasks.size() < 2) throw_config("a continual run needs at least 2 tasks");
  if (tasks.size() > 255) throw_config("at most 255 tasks are supported");
  for (const auto& t : tasks) t.validate();
  randomization.validate();
  if (random_steps < 1) throw_config("random_steps must be >= 1");
  if (random_episode_steps < 0) throw_config("random_episode_steps must be >= 0");
  srl.validate();
  ppo.validate();
  student.validate();
  if (generation.size_cap < 1) throw_config("distill.size_cap must be >= 1");
  if (n_eval < 1) throw_config("n_eval must be >= 1");
  if (anchor_episodes < 1) throw_config("anchor_episodes must be >= 1");
  if (curve_task < -1 || curve_task >= static_cast<int>(tasks.size())) {
    throw_config("curve_task must be -1 or a task index");
  }
  if (curve_students < 1) throw_config("curve_students must be >= 1");
}

ForgettingEntry forgetting_entry(std::string method, int task, double before, double after) {
  ForgettingEntry e;
  e.method = std::move(method);
  e.task = task;
  e.before = before;
  e.after = after;
  e.abs_drop = before - after;
  e.rel_drop = e.abs_drop / std::max(std::abs(before), kRelDropEps);
  return e;
}

CurveResult checkpoint_distill_curve(const std::vector<ppo::PolicyCheckpoint>& checkpoints,
                                     const srl::SrlModel& encoder, const sim::TaskSpec& task,
                                     int task_id, const Anchors& anchors, const CurveConfig& config) {
  if (checkpoints.empty()) throw_usage("checkpoint_distill_curve: no checkpoints");
  if (config.students < 1) throw_config("curve students must be >= 1");
  CurveResult out;
  out.teacher = {"teacher_norm", "timesteps", "", {}};
  out.student = {"student_norm_mean", "timesteps", "student_norm_std", {}};
  const ppo::FeatureMap features = ppo::FeatureMap::from_encoder(encoder);
  const std::uint64_t eval_seed = derive_seed(config.seed, "curve-eval");
  double gap = 0.0;
  for (const auto& ck : checkpoints) {
    const double x = static_cast<double>(ck.timesteps);
    const std::uint64_t ck_seed = derive_seed(config.seed, static_cast<std::uint64_t>(ck.timesteps));
    const EvalReport teacher = evaluate_policy(teacher_actor(ck.policy, encoder), task, config.n_eval, eval_seed, anchors);
    distill::GenerationConfig gen = config.generation;
    gen.task_id = task_id;
    const std::uint64_t digest = fnv1a64(nn::encode_checkpoint(ck.policy.to_checkpoint()));
    const auto data = distill::generate_distill_dataset(ck.policy, features, task, gen, digest,
                                                        derive_seed(ck_seed, "curve-distill"));
    std::vector<double> scores;
    for (int s = 0; s < config.students; ++s) {
      const auto trained = distill::train_student(data.data, config.student,
                                                  derive_seed(ck_seed, static_cast<std::uint64_t>(s)));
      scores.push_back(clamp_report(
          evaluate_policy(student_actor(trained.student), task, config.n_eval, eval_seed, anchors).normalized));
    }
    const double m = mean_of(scores);
    double var = 0.0;
    for (double v : scores) var += (v - m) * (v - m);
    const double t = clamp_report(teacher.normalized);
    out.teacher.points.push_back({x, t, {}});
    out.student.points.push_back({x, m, std::sqrt(var / static_cast<double>(scores.size()))});
    gap += std::abs(t - m);
  }
  out.mean_abs_gap = gap / static_cast<double>(checkpoints.size());
  return out;
}

FinetuneResult finetune_baseline(const ppo::PolicyNet& policy, const srl::SrlModel& first_encoder,
                                 const sim::TaskSpec& first_task, const Anchors& first_anchors,
                                 sim::Env next_env, const srl::SrlModel& next_encoder,
                                 const ppo::PpoConfig& config, int n_eval, std::uint64_t seed) {
  const std::uint64_t eval_seed = derive_seed(seed, "finetune-eval");
  const double before =
      evaluate_policy(teacher_actor(policy, first_encoder), first_task, n_eval, eval_seed, first_anchors).normalized;
  auto trained = ppo::train_task(std::move(next_env), next_encoder, config, derive_seed(seed, "finetune-ppo"), &policy);
  const double after =
      evaluate_policy(teacher_actor(trained.teacher, first_encoder), first_task, n_eval, eval_seed, first_anchors)
          .normalized;
  return {std::move(trained.teacher), forgetting_entry("FineTune", 0, before, after)};
}

namespace {

std::string task_dir(int i) { return "task" + std::to_string(i); }

std::string stage_name(int task, const char* stage) { return task_dir(task) + "/" + stage; }

// Runs one stage with status tracking; failures are re-raised with the stage name.
template <typename F>
void stage(store::RunDirectory* run, const std::string& name, F&& body) {
  if (run) run->set_status(name, store::StageStatus::kRunning);
  try {
    body();
  } catch (const Error& e) {
    if (run) run->set_status(name, store::StageStatus::kFailed);
    throw Error(e.kind(), "stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    if (run) run->set_status(name, store::StageStatus::kFailed);
    throw Error(ErrorKind::kUsage, "stage " + name + ": " + e.what());
  }
  if (run) run->set_status(name, store::StageStatus::kDone);
}

std::string checkpoint_name(std::int64_t timesteps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%07lld.crlp", static_cast<long long>(timesteps));
  return buf;
}

void write_eval(const std::vector<std::pair<std::string, EvalReport>>& rows, const std::filesystem::path& path) {
  store::Table t;
  t.header = {"policy", "task", "raw_mean", "stderr", "norm_mean", "norm_stderr"};
  for (const auto& [policy, r] : rows) {
    t.rows.push_back({policy, r.task, r.raw_mean, r.std_error, clamp_report(r.normalized), r.normalized_err});
  }
  store::write_table(t, path);
}

}  // namespace

SequenceResult run_sequence(const ScenarioConfig& config, store::RunDirectory* run) {
  config.validate();
  TaskRegistry registry;
  for (const auto& t : config.tasks) registry.add(t, config.randomization);
  SequenceResult result;
  std::vector<std::pair<std::string, EvalReport>> eval_rows;
  std::optional<distill::StudentPolicy> single_task_student;
  std::optional<ppo::PolicyNet> finetuned;
  const int n_tasks = registry.size();

  for (int i = 0; i < n_tasks; ++i) {
    const std::uint64_t task_seed = derive_seed(config.seed, task_dir(i));
    const sim::TaskSpec& task = registry.task(i);
    const TaskRegistry::Handle handle = registry.open(i);
    TaskOutcome outcome;
    std::vector<std::size_t> train_idx, heldout_idx;

    if (config.probe_revoked_access && i == 1) {
      stage(run, stage_name(i, "access-probe"), [&] { registry.training_env(registry.open(0)); });
    }

    stage(run, stage_name(i, "collect-random"), [&] {
      sim::Env env = registry.training_env(handle);
      srl::RandomDataset data = srl::collect_random_dataset(env, i, config.random_steps,
                                                            derive_seed(task_seed, "random"),
                                                            config.random_episode_steps);
      outcome.random_digest = srl::random_dataset_digest(data);
      registry.attach_random_data(handle, std::move(data));
      if (run) {
        write_text_file(run->path(task_dir(i) + "/random_dataset.txt"),
                        "digest " + hex64(outcome.random_digest) + "\ntransitions " +
                            std::to_string(config.random_steps) + "\n");
        run->record(task_dir(i) + "/random_dataset.txt");
      }
    });

    stage(run, stage_name(i, "train-srl"), [&] {
      const srl::RandomDataset& data = registry.random_data(handle);
      for (std::size_t k = 0; k < data.size(); ++k) (k % 5 == 0 ? heldout_idx : train_idx).push_back(k);
      if (train_idx.empty()) train_idx = heldout_idx;
      auto trained = srl::train_srl(data, config.srl, derive_seed(task_seed, "srl"), train_idx);
      outcome.encoder = std::move(trained.model);
      outcome.inverse_accuracy = srl::inverse_accuracy(outcome.encoder, data, heldout_idx);
      if (run) {
        nn::save_checkpoint(outcome.encoder.to_checkpoint(), run->path(task_dir(i) + "/encoder.crlp"));
        run->record(task_dir(i) + "/encoder.crlp");
        MetricSeries loss{"srl_loss", "epoch", "", {}};
        for (std::size_t e = 0; e < trained.epoch_loss.size(); ++e) {
          loss.points.push_back({static_cast<double>(e + 1), trained.epoch_loss[e], {}});
        }
        store::write_csv(loss, run->path(task_dir(i) + "/srl_loss.csv"));
        run->record(task_dir(i) + "/srl_loss.csv");
        store::write_table({{"task", "heldout_inverse_accuracy"}, {{std::string(sim::task_name(task.kind)),
                                                                    outcome.inverse_accuracy}}},
                           run->path(task_dir(i) + "/srl_metrics.csv"));
        run->record(task_dir(i) + "/srl_metrics.csv");
      }
    });

    stage(run, stage_name(i, "train-teacher"), [&] {
      outcome.training = ppo::train_task(registry.training_env(handle), outcome.encoder, config.ppo,
                                         derive_seed(task_seed, "ppo"));
      const auto teacher_params = outcome.training.teacher.to_checkpoint();
      outcome.teacher_digest = fnv1a64(nn::encode_checkpoint(teacher_params));
      if (run) {
        nn::save_checkpoint(teacher_params, run->path(task_dir(i) + "/teacher.crlp"));
        run->record(task_dir(i) + "/teacher.crlp");
        for (const auto& ck : outcome.training.checkpoints) {
          const std::string rel = task_dir(i) + "/checkpoints/" + checkpoint_name(ck.timesteps);
          nn::save_checkpoint(ck.policy.to_checkpoint(), run->path(rel));
          run->record(rel);
        }
        store::write_csv(outcome.training.reward_curve, run->path(task_dir(i) + "/reward_curve.csv"));
        run->record(task_dir(i) + "/reward_curve.csv");
      }
    });

    stage(run, stage_name(i, "evaluate-teacher"), [&] {
      const std::uint64_t eval_seed = derive_seed(task_seed, "eval");
      outcome.anchors.random_mean = random_anchor(task, config.anchor_episodes, eval_seed);
      outcome.anchors.teacher_mean = mean_of(
          rollout_rewards(teacher_actor(outcome.training.teacher, outcome.encoder), task, config.anchor_episodes, eval_seed));
      outcome.teacher_report =
          evaluate_policy(teacher_actor(outcome.training.teacher, outcome.encoder), task, config.n_eval, eval_seed,
                          outcome.anchors);
      eval_rows.emplace_back("teacher" + std::to_string(i), outcome.teacher_report);
    });

    if (config.finetune_baseline && i == 1) {
      stage(run, stage_name(i, "finetune-baseline"), [&] {
        const TaskOutcome& first = result.tasks.front();
        auto ft = finetune_baseline(first.training.teacher, first.encoder, registry.task(0), first.anchors,
                                    registry.training_env(handle), outcome.encoder, config.ppo, config.n_eval,
                                    derive_seed(config.seed, "finetune"));
        result.forgetting.push_back(ft.entry);
        finetuned = std::move(ft.tuned);
      });
    }

    stage(run, stage_name(i, "generate-distill"), [&] {
      distill::GenerationConfig gen = config.generation;
      gen.task_id = i;
      outcome.distill = distill::generate_distill_dataset(outcome.training.teacher,
                                                          ppo::FeatureMap::from_encoder(outcome.encoder), task, gen,
                                                          outcome.teacher_digest, derive_seed(task_seed, "distill"));
      if (run) {
        distill::save_distill_dataset(outcome.distill.data, run->path(task_dir(i) + "/distill.crld"));
        run->record(task_dir(i) + "/distill.crld");
      }
    });

    if (config.finetune_baseline && i == 0) {
      stage(run, stage_name(i, "single-task-student"), [&] {
        single_task_student =
            distill::train_student(outcome.distill.data, config.student, derive_seed(task_seed, "single-student"))
                .student;
      });
    }

    if (config.curve_task == i) {
      stage(run, stage_name(i, "checkpoint-curve"), [&] {
        CurveConfig cc{config.generation, config.student, config.curve_students, config.n_eval,
                       derive_seed(task_seed, "curve")};
        result.curve = checkpoint_distill_curve(outcome.training.checkpoints, outcome.encoder, task, i,
                                                outcome.anchors, cc);
        if (run) {
          store::Table t;
          t.header = {"timesteps", "teacher_norm", "student_norm_mean", "student_norm_std"};
          for (std::size_t k = 0; k < result.curve->teacher.points.size(); ++k) {
            const auto& s = result.curve->student.points[k];
            t.rows.push_back({s.x, result.curve->teacher.points[k].y, s.y, s.y_err.value_or(0.0)});
          }
          store::write_table(t, run->path("curve.csv"));
          run->record("curve.csv");
          const std::vector<MetricSeries> series{result.curve->teacher, result.curve->student};
          store::render_plot(series, run->path("curve.svg"), "checkpoint distillation");
          run->record("curve.svg");
        }
      });
    }

    registry.revoke(i);
    result.tasks.push_back(std::move(outcome));
  }

  stage(run, "merge", [&] {
    std::vector<distill::DistillDataset> parts;
    for (const auto& t : result.tasks) parts.push_back(t.distill.data);
    result.merged = distill::merge_datasets(parts);
    if (run) {
      distill::save_distill_dataset(result.merged, run->path("merged.crld"));
      run->record("merged.crld");
    }
  });

  stage(run, "train-student", [&] {
    result.student = distill::train_student(result.merged, config.student, derive_seed(config.seed, "student"));
    if (run) {
      nn::save_checkpoint(result.student.student.to_checkpoint(), run->path("student.crlp"));
      run->record("student.crlp");
      store::write_csv(result.student.loss_curve, run->path("student_loss.csv"));
      run->record("student_loss.csv");
    }
  });

  stage(run, "evaluate-student", [&] {
    for (int i = 0; i < n_tasks; ++i) {
      const TaskOutcome& t = result.tasks[static_cast<std::size_t>(i)];
      const std::uint64_t eval_seed = derive_seed(derive_seed(config.seed, task_dir(i)), "eval");
      result.student_reports.push_back(evaluate_policy(student_actor(result.student.student), registry.task(i),
                                                       config.n_eval, eval_seed, t.anchors));
      eval_rows.emplace_back("student", result.student_reports.back());
    }
    if (config.finetune_baseline) {
      const TaskOutcome& first = result.tasks.front();
      const std::uint64_t eval_seed = derive_seed(derive_seed(config.seed, task_dir(0)), "eval");
      const double before = evaluate_policy(student_actor(*single_task_student), registry.task(0), config.n_eval,
                                            eval_seed, first.anchors)
                                .normalized;
      result.forgetting.push_back(
          forgetting_entry("Distillation", 0, before, result.student_reports.front().normalized));
    }
    if (run) {
      write_eval(eval_rows, run->path("eval.csv"));
      run->record("eval.csv");
      store::Table anchors;
      anchors.header = {"task", "random_mean", "teacher_mean"};
      for (const auto& t : result.tasks) {
        anchors.rows.push_back({t.teacher_report.task, t.anchors.random_mean, t.anchors.teacher_mean});
      }
      store::write_table(anchors, run->path("anchors.csv"));
      run->record("anchors.csv");
      if (!result.forgetting.empty()) {
        store::Table f;
        f.header = {"method", "task", "before", "after", "rel_drop"};
        for (const auto& e : result.forgetting) {
          f.rows.push_back({e.method, static_cast<double>(e.task), e.before, e.after, e.rel_drop});
        }
        store::write_table(f, run->path("forgetting.csv"));
        run->record("forgetting.csv");
      }
      std::vector<MetricSeries> curves;
      for (std::size_t i = 0; i < result.tasks.size(); ++i) {
        MetricSeries s = result.tasks[i].training.reward_curve;
        if (s.points.empty()) continue;
        s.name = result.tasks[i].teacher_report.task;
        curves.push_back(std::move(s));
      }
      if (!curves.empty()) {
        store::render_plot(curves, run->path("reward_curves.svg"), "teacher training reward");
        run->record("reward_curves.svg");
      }
      run->save();
    }
  });
  return result;
}

}  // namespace crlab::continual
