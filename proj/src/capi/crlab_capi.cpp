#include "crlab/crlab.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <new>
#include <sstream>
#include <string>

#include "app/config.hpp"
#include "app/gradsuite.hpp"
#include "common/binio.hpp"
#include "common/error.hpp"
#include "common/hash.hpp"
#include "continual/continual.hpp"
#include "distill/distill.hpp"
#include "nn/checkpoint.hpp"
#include "store/manifest.hpp"
#include "store/plot.hpp"
#include "store/table.hpp"

struct crlab_config {
  crlab::app::RunConfig cfg;
};

struct crlab_env {
  crlab::sim::Env env;
};

struct crlab_student {
  crlab::distill::StudentPolicy policy;
};

namespace {

using namespace crlab;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

template <typename F>
crlab_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return CRLAB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<crlab_status>(static_cast<int>(e.kind()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CRLAB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return CRLAB_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw_usage(std::string(name) + " must not be null");
}

std::string str(const char* s, const char* name) {
  require(s, name);
  return s;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

const app::RunConfig& cfg_of(const crlab_config* c) {
  require(c, "config");
  return c->cfg;
}

srl::SrlModel load_encoder(const std::string& path) { return srl::SrlModel::from_checkpoint(nn::load_checkpoint(path)); }

ppo::PolicyNet load_teacher(const std::string& path) { return ppo::PolicyNet::from_checkpoint(nn::load_checkpoint(path)); }

std::int64_t checkpoint_timesteps(const fs::path& p) {
  const std::string stem = p.stem().string();
  if (!stem.starts_with("ckpt_")) return -1;
  try {
    return std::stoll(stem.substr(5));
  } catch (const std::exception&) {
    return -1;
  }
}

std::optional<continual::Anchors> read_anchors(const std::string& path, const std::string& task) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3) throw_io(path + ": expected task,random_mean,teacher_mean rows");
    if (cells[0] == task) {
      try {
        return continual::Anchors{std::stod(cells[1]), std::stod(cells[2])};
      } catch (const std::exception&) {
        throw_io(path + ": malformed anchor values");
      }
    }
  }
  throw_io(path + ": no anchors for task " + task);
}

std::vector<fs::path> list_csv(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

extern "C" {

const char* crlab_version(void) { return store::kToolVersion; }

const char* crlab_last_error(void) { return g_last_error.c_str(); }

void crlab_string_free(char* s) { std::free(s); }

crlab_status crlab_config_load(const char* path, crlab_config** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<crlab_config>();
    if (path && *path) c->cfg = app::load_config(path);
    *out = c.release();
  });
}

crlab_status crlab_config_parse(const char* text, crlab_config** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<crlab_config>();
    c->cfg = app::parse_config(str(text, "text"));
    *out = c.release();
  });
}

crlab_status crlab_config_snapshot(const crlab_config* config, char** out_text) {
  return guard([&] {
    require(out_text, "out_text");
    *out_text = dup(app::config_snapshot(cfg_of(config)));
  });
}

void crlab_config_free(crlab_config* config) { delete config; }

crlab_status crlab_env_create(const crlab_config* config, const char* task, int randomize, crlab_env** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    const auto& c = cfg_of(config);
    sim::RandomizationSpec r = c.scenario.randomization;
    r.enabled = randomize != 0;
    *out = new crlab_env{sim::Env(c.task(sim::parse_task(str(task, "task"))), r)};
  });
}

crlab_status crlab_env_reset(crlab_env* env, uint64_t seed) {
  return guard([&] {
    require(env, "env");
    env->env.reset(seed);
  });
}

crlab_status crlab_env_step(crlab_env* env, int action, double* reward, int* done) {
  return guard([&] {
    require(env, "env");
    if (action < 0 || action >= sim::kNumActions) throw_usage("invalid action " + std::to_string(action));
    const auto t = env->env.step(static_cast<sim::Action>(action));
    if (reward) *reward = t.reward;
    if (done) *done = t.done ? 1 : 0;
  });
}

crlab_status crlab_env_observation(const crlab_env* env, const uint8_t** pixels, int* height, int* width) {
  return guard([&] {
    require(env, "env");
    require(pixels, "pixels");
    const auto& obs = env->env.observation();
    if (obs.pixels.empty()) throw_usage("environment has not been reset");
    *pixels = obs.pixels.data();
    if (height) *height = obs.height;
    if (width) *width = obs.width;
  });
}

void crlab_env_free(crlab_env* env) { delete env; }

crlab_status crlab_student_load(const char* path, crlab_student** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    *out = new crlab_student{distill::StudentPolicy::from_checkpoint(nn::load_checkpoint(str(path, "path")))};
  });
}

crlab_status crlab_student_act(const crlab_student* student, const uint8_t* pixels, int height, int width,
                               double probs[CRLAB_NUM_ACTIONS], int* action) {
  return guard([&] {
    require(student, "student");
    require(pixels, "pixels");
    if (height <= 0 || width <= 0) throw_usage("image dimensions must be positive");
    sim::Observation obs;
    obs.height = height;
    obs.width = width;
    obs.pixels.assign(pixels, pixels + static_cast<std::size_t>(height) * width * 3);
    const auto a = distill::student_act(student->policy, obs);
    if (probs) std::copy(a.probs.begin(), a.probs.end(), probs);
    if (action) *action = a.greedy_action;
  });
}

void crlab_student_free(crlab_student* student) { delete student; }

crlab_status crlab_collect_random(const crlab_config* config, const char* task, int64_t steps, uint64_t seed,
                                  const char* out_path) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto kind = sim::parse_task(str(task, "task"));
    sim::Env env(c.task(kind), c.scenario.randomization);
    const auto data = srl::collect_random_dataset(env, static_cast<int>(kind), steps, seed,
                                                  c.scenario.random_episode_steps);
    srl::save_random_dataset(data, str(out_path, "out_path"));
  });
}

crlab_status crlab_train_srl(const crlab_config* config, const char* data_path, uint64_t seed, const char* out_path,
                             double* heldout_accuracy) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto data = srl::load_random_dataset(str(data_path, "data_path"));
    std::vector<std::size_t> train, heldout;
    for (std::size_t k = 0; k < data.size(); ++k) (k % 5 == 0 ? heldout : train).push_back(k);
    if (train.empty()) train = heldout;
    const auto result = srl::train_srl(data, c.scenario.srl, seed, train);
    nn::save_checkpoint(result.model.to_checkpoint(), str(out_path, "out_path"));
    if (heldout_accuracy) *heldout_accuracy = srl::inverse_accuracy(result.model, data, heldout);
  });
}

crlab_status crlab_train_teacher(const crlab_config* config, const char* task, const char* encoder_path,
                                 uint64_t seed, const char* out_dir) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto kind = sim::parse_task(str(task, "task"));
    const auto encoder = load_encoder(str(encoder_path, "encoder_path"));
    const fs::path dir = str(out_dir, "out_dir");
    const auto result = ppo::train_task(sim::Env(c.task(kind), c.scenario.randomization), encoder, c.scenario.ppo,
                                        seed);
    nn::save_checkpoint(result.teacher.to_checkpoint(), dir / "teacher.crlp");
    for (const auto& ck : result.checkpoints) {
      char name[40];
      std::snprintf(name, sizeof name, "ckpt_%07lld.crlp", static_cast<long long>(ck.timesteps));
      nn::save_checkpoint(ck.policy.to_checkpoint(), dir / "checkpoints" / name);
    }
    store::write_csv(result.reward_curve, dir / "reward_curve.csv");
  });
}

crlab_status crlab_gen_distill(const crlab_config* config, const char* task, int task_id, const char* teacher_path,
                               const char* encoder_path, int size_cap, uint64_t seed, const char* out_path) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto kind = sim::parse_task(str(task, "task"));
    const std::string tpath = str(teacher_path, "teacher_path");
    const auto teacher = load_teacher(tpath);
    const auto encoder = load_encoder(str(encoder_path, "encoder_path"));
    distill::GenerationConfig gen = c.scenario.generation;
    gen.task_id = task_id;
    if (size_cap > 0) gen.size_cap = size_cap;
    const auto result = distill::generate_distill_dataset(teacher, ppo::FeatureMap::from_encoder(encoder),
                                                          c.task(kind), gen, file_digest(tpath), seed);
    distill::save_distill_dataset(result.data, str(out_path, "out_path"));
  });
}

crlab_status crlab_augment(const char* in_path, const double* factors, size_t n_factors, const char* out_path) {
  return guard([&] {
    if (n_factors > 0) require(factors, "factors");
    const auto data = distill::load_distill_dataset(str(in_path, "in_path"));
    const auto out = distill::augment_luminosity(data, std::span<const double>(factors, n_factors));
    distill::save_distill_dataset(out, str(out_path, "out_path"));
  });
}

crlab_status crlab_merge(const char* const* in_paths, size_t n_paths, const char* out_path) {
  return guard([&] {
    require(in_paths, "in_paths");
    std::vector<distill::DistillDataset> parts;
    for (size_t i = 0; i < n_paths; ++i) parts.push_back(distill::load_distill_dataset(str(in_paths[i], "in_path")));
    distill::save_distill_dataset(distill::merge_datasets(parts), str(out_path, "out_path"));
  });
}

crlab_status crlab_distill(const crlab_config* config, const char* data_path, uint64_t seed, const char* out_path,
                           const char* loss_csv) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto data = distill::load_distill_dataset(str(data_path, "data_path"));
    const auto result = distill::train_student(data, c.scenario.student, seed);
    nn::save_checkpoint(result.student.to_checkpoint(), str(out_path, "out_path"));
    if (loss_csv && *loss_csv) store::write_csv(result.loss_curve, loss_csv);
  });
}

crlab_status crlab_eval(const crlab_config* config, const char* policy_path, const char* encoder_path,
                        const char* task, int n_eval, uint64_t seed, const char* anchors_csv, const char* out_csv,
                        crlab_eval_result* out) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto kind = sim::parse_task(str(task, "task"));
    const nn::ParamSet stored = nn::load_checkpoint(str(policy_path, "policy_path"));
    std::optional<distill::StudentPolicy> student;
    std::optional<ppo::PolicyNet> teacher;
    std::optional<srl::SrlModel> encoder;
    continual::Actor actor;
    std::string label;
    if (stored.contains("student.input_spec")) {
      student = distill::StudentPolicy::from_checkpoint(stored);
      actor = continual::student_actor(*student);
      label = "student";
    } else {
      teacher = ppo::PolicyNet::from_checkpoint(stored);
      if (!encoder_path || !*encoder_path) throw_usage("evaluating a teacher needs its encoder");
      encoder = load_encoder(encoder_path);
      actor = continual::teacher_actor(*teacher, *encoder);
      label = "teacher";
    }
    std::optional<continual::Anchors> anchors;
    if (anchors_csv && *anchors_csv) anchors = read_anchors(anchors_csv, std::string(sim::task_name(kind)));
    const auto r = continual::evaluate_policy(actor, c.task(kind), n_eval, seed, anchors);
    if (out) *out = {r.raw_mean, r.std_error, r.anchors.random_mean, r.anchors.teacher_mean, r.normalized, n_eval};
    if (out_csv && *out_csv) {
      store::Table t;
      t.header = {"policy", "task", "raw_mean", "stderr", "norm_mean", "norm_stderr"};
      const double nan = std::numeric_limits<double>::quiet_NaN();
      auto cell = [](double v) -> store::Cell {
        if (std::isnan(v)) return std::string("nan");
        return v;
      };
      t.rows.push_back({label, r.task, r.raw_mean, r.std_error,
                        anchors ? cell(continual::clamp_report(r.normalized)) : cell(nan), cell(r.normalized_err)});
      store::write_table(t, out_csv);
    }
  });
}

crlab_status crlab_curve(const crlab_config* config, const char* checkpoints_dir, const char* encoder_path,
                         const char* task, uint64_t seed, const char* out_dir, double* mean_abs_gap) {
  return guard([&] {
    const auto& c = cfg_of(config);
    const auto kind = sim::parse_task(str(task, "task"));
    const sim::TaskSpec spec = c.task(kind);
    const fs::path dir = str(checkpoints_dir, "checkpoints_dir");
    const auto encoder = load_encoder(str(encoder_path, "encoder_path"));
    std::vector<std::pair<std::int64_t, fs::path>> found;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
      const std::int64_t ts = checkpoint_timesteps(e.path());
      if (e.path().extension() == ".crlp" && ts >= 0) found.emplace_back(ts, e.path());
    }
    if (ec) throw_io("cannot list " + dir.string() + ": " + ec.message());
    if (found.empty()) throw_usage("no ckpt_<timesteps>.crlp files in " + dir.string());
    std::sort(found.begin(), found.end());
    std::vector<ppo::PolicyCheckpoint> checkpoints;
    for (const auto& [ts, path] : found) checkpoints.push_back({ts, load_teacher(path.string())});
    continual::CurveConfig cc{c.scenario.generation, c.scenario.student, c.scenario.curve_students,
                              c.scenario.n_eval, seed};
    const std::uint64_t eval_seed = derive_seed(seed, "curve-eval");
    continual::Anchors anchors;
    anchors.random_mean = continual::random_anchor(spec, c.scenario.anchor_episodes, eval_seed);
    anchors.teacher_mean = continual::mean_of(continual::rollout_rewards(
        continual::teacher_actor(checkpoints.back().policy, encoder), spec, c.scenario.anchor_episodes, eval_seed));
    const auto curve = continual::checkpoint_distill_curve(checkpoints, encoder, spec, static_cast<int>(kind),
                                                           anchors, cc);
    const fs::path out = str(out_dir, "out_dir");
    store::Table t;
    t.header = {"timesteps", "teacher_norm", "student_norm_mean", "student_norm_std"};
    for (std::size_t k = 0; k < curve.teacher.points.size(); ++k) {
      const auto& s = curve.student.points[k];
      t.rows.push_back({s.x, curve.teacher.points[k].y, s.y, s.y_err.value_or(0.0)});
    }
    store::write_table(t, out / "curve.csv");
    const std::vector<MetricSeries> series{curve.teacher, curve.student};
    store::render_plot(series, out / "curve.svg", "checkpoint distillation");
    if (mean_abs_gap) *mean_abs_gap = curve.mean_abs_gap;
  });
}

crlab_status crlab_continual(const crlab_config* config, const char* out_dir, int probe_access) {
  return guard([&] {
    const auto& c = cfg_of(config);
    auto scenario = c.build();
    scenario.probe_revoked_access = probe_access != 0;
    store::RunDirectory run(store::resolve_run_path(str(out_dir, "out_dir")), app::config_snapshot(c));
    continual::run_sequence(scenario, &run);
  });
}

crlab_status crlab_replay(const char* run_dir, const char* scratch_dir, char** report) {
  return guard([&] {
    const fs::path original = store::resolve_run_path(str(run_dir, "run_dir"));
    const fs::path scratch = store::resolve_run_path(str(scratch_dir, "scratch_dir"));
    if (fs::weakly_canonical(original) == fs::weakly_canonical(scratch)) {
      throw_usage("replay scratch directory must differ from the run directory");
    }
    const auto run = store::RunDirectory::open(original);
    std::string text;
    for (const auto& bad : run.verify()) text += "CORRUPT " + bad + "\n";
    const app::RunConfig cfg = app::parse_config(run.manifest().config_snapshot, "snapshot");
    {
      std::error_code ec;
      fs::remove_all(scratch, ec);
      store::RunDirectory replayed(scratch, app::config_snapshot(cfg));
      continual::run_sequence(cfg.build(), &replayed);
    }
    const auto before = list_csv(original);
    const auto after = list_csv(scratch);
    bool ok = text.empty() && before == after;
    if (before != after) text += "DIFF csv file sets differ\n";
    for (const auto& rel : before) {
      std::error_code ec;
      if (!fs::exists(scratch / rel, ec)) {
        text += "MISSING " + rel.string() + "\n";
        ok = false;
        continue;
      }
      const bool same = read_file(original / rel) == read_file(scratch / rel);
      text += (same ? "SAME " : "DIFF ") + rel.string() + "\n";
      ok = ok && same;
    }
    if (report) *report = dup(text);
    if (!ok) throw_numeric("replay mismatch:\n" + text);
  });
}

crlab_status crlab_gradcheck(int nets, uint64_t seed, char** report) {
  return guard([&] {
    const auto r = app::run_grad_suite(nets, seed);
    if (report) *report = dup(r.text());
    if (!r.passed()) throw_numeric("gradient check failed:\n" + r.text());
  });
}

crlab_status crlab_plot(const char* const* csv_paths, size_t n_paths, const char* title, const char* out_svg) {
  return guard([&] {
    require(csv_paths, "csv_paths");
    std::vector<MetricSeries> series;
    for (size_t i = 0; i < n_paths; ++i) series.push_back(store::read_csv(str(csv_paths[i], "csv_path")));
    store::render_plot(series, str(out_svg, "out_svg"), title ? title : "");
  });
}

crlab_status crlab_resolve_run_path(const char* path, char** out) {
  return guard([&] {
    require(out, "out");
    *out = dup(store::resolve_run_path(str(path, "path")).string());
  });
}

}  // extern "C"
