#include <crlab/crlab.h>
#include <sys/wait.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "app/config.hpp"
#include "app/gradsuite.hpp"
#include "common/binio.hpp"
#include "common/hash.hpp"
#include "continual/continual.hpp"
#include "distill/distill.hpp"
#include "nn/checkpoint.hpp"
#include "oracles.hpp"
#include "ppo/ppo.hpp"
#include "store/manifest.hpp"

using namespace crlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> g_verdicts;
std::ofstream g_log;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  g_verdicts.push_back({id, name, pass, detail});
  const std::string line = fmt("criterion %d %s: %s | %s", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  if (g_log) g_log << line << "\n" << std::flush;
}

void note(const std::string& text) {
  std::printf("  %s\n", text.c_str());
  std::fflush(stdout);
  if (g_log) g_log << "  " << text << "\n" << std::flush;
}

double minutes_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

sim::WorldState state_at(const sim::TaskSpec& task, sim::Vec2 robot, sim::Vec2 oldest, bool bump) {
  sim::WorldState s;
  s.robot = robot;
  s.pos_history.assign(static_cast<std::size_t>(task.movement_window) + 1, oldest);
  s.pos_history.back() = robot;
  s.bumped = bump;
  return s;
}

void criterion_reward() {
  const sim::TaskSpec task = sim::TaskSpec::defaults(sim::TaskKind::kTargetCircling);
  Rng rng(derive_seed(1, "reward-oracle"));
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const sim::Vec2 robot{rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95)};
    const sim::Vec2 oldest{rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95)};
    const bool bump = rng.below(4) == 0;
    const double got = sim::reward_circle(state_at(task, robot, oldest, bump), task);
    const double want =
        oracle::circle_reward(robot.x, robot.y, oldest.x, oldest.y, bump, task.lambda, task.circle_radius);
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  }
  const double h1 = sim::reward_circle(state_at(task, {0.5, 0}, {0, 0.5}, false), task);
  const double h2 = sim::reward_circle(state_at(task, {0.3, -0.2}, {0.3, -0.2}, false), task);
  const double h3 = sim::reward_circle(state_at(task, {0.5, 0}, {0, 0.5}, true), task);
  const bool hand = h1 == 5.0 && h2 == 0.0 && h3 == -95.0;
  report(1, "reward oracle", worst <= 1e-12 && hand,
         fmt("max error %.2e (relative above 1) over 10000 states (tol 1e-12); hand cases %.17g, %.17g, %.17g", worst, h1, h2,
             h3));
}

void criterion_gradients() {
  const app::GradSuiteReport r = app::run_grad_suite(100, 7, 1e-4, 1e-4);
  double worst = 0.0;
  for (const auto& e : r.entries) worst = std::max(worst, e.max_relative_error);
  report(2, "gradient suite", r.passed(), fmt("100 nets per loss, h=1e-4, worst relative error %.2e (tol 1e-4)", worst));
  std::string text = r.text();
  for (std::size_t p = 0, q; (q = text.find('\n', p)) != std::string::npos; p = q + 1) note(text.substr(p, q - p));
}

void criterion_gae() {
  Rng rng(derive_seed(3, "gae-oracle"));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> r(n), v(n + 1);
    std::vector<std::uint8_t> d(n);
    for (auto& x : r) x = rng.uniform(-5.0, 5.0);
    for (auto& x : v) x = rng.uniform(-5.0, 5.0);
    for (auto& x : d) x = rng.below(4) == 0;
    const double gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.0, 1.0);
    const auto got = ppo::gae(r, v, d, gamma, lambda);
    const auto want = oracle::gae(r, v, d, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) worst = std::max(worst, std::abs(got.advantages[t] - want[t]));
  }
  report(3, "GAE oracle", worst <= 1e-12, fmt("1000 trials of length <= 8, max abs error %.2e (tol 1e-12)", worst));
}

continual::Actor expert_actor() {
  return [](const sim::Env& env) { return oracle::expert_action(env.state(), env.task()); };
}

struct GateResult {
  double normalized = 0.0;
  double raw = 0.0;
};

void criterion_teacher_gate(const app::RunConfig& cfg, const continual::SequenceResult& run, std::uint64_t seed,
                            int episodes) {
  bool all_tasks = true;
  std::string detail;
  for (std::size_t i = 0; i < run.tasks.size(); ++i) {
    const auto& outcome = run.tasks[i];
    const sim::TaskSpec task = cfg.build().tasks[i];
    const double threshold = task.kind == sim::TaskKind::kTargetReaching ? 0.8 : 0.7;
    const std::uint64_t eval_seed = derive_seed(seed, "gate-eval-" + std::to_string(i));
    const continual::Anchors expert{continual::random_anchor(task, episodes, eval_seed),
                                    continual::mean_of(continual::rollout_rewards(expert_actor(), task, episodes, eval_seed))};
    note(fmt("%s: expert anchors random %.2f, scripted expert %.2f", std::string(sim::task_name(task.kind)).c_str(),
             expert.random_mean, expert.teacher_mean));
    std::vector<GateResult> seeds;
    auto score = [&](const ppo::PolicyNet& teacher) {
      const auto rewards = continual::rollout_rewards(continual::teacher_actor(teacher, outcome.encoder), task,
                                                      episodes, eval_seed);
      return GateResult{continual::normalize(continual::mean_of(rewards), expert), continual::mean_of(rewards)};
    };
    seeds.push_back(score(outcome.training.teacher));
    double worst_minutes = 0.0;
    for (int k = 1; k < 3; ++k) {
      const auto t0 = Clock::now();
      const auto extra = ppo::train_task(sim::Env(task, cfg.scenario.randomization), outcome.encoder,
                                         cfg.scenario.ppo, derive_seed(seed, "gate-ppo-" + std::to_string(i * 10 + k)));
      worst_minutes = std::max(worst_minutes, minutes_since(t0));
      seeds.push_back(score(extra.teacher));
    }
    int passing = 0;
    double mean = 0.0;
    std::string per_seed;
    for (const auto& s : seeds) {
      passing += s.normalized >= threshold;
      mean += s.normalized / 3.0;
      per_seed += fmt("%s%.3f (raw %.2f)", per_seed.empty() ? "" : ", ", s.normalized, s.raw);
    }
    const bool ok = passing >= 2 && worst_minutes <= 45.0;
    all_tasks = all_tasks && ok;
    note(fmt("%s: per-seed normalized %s; PPO wall time %.1f min per seed; heldout inverse accuracy %.3f",
             std::string(sim::task_name(task.kind)).c_str(), per_seed.c_str(), worst_minutes,
             outcome.inverse_accuracy));
    detail += fmt("%s%s %d/3 >= %.1f (mean %.3f)", detail.empty() ? "" : "; ",
                  std::string(sim::task_name(task.kind)).c_str(), passing, threshold, mean);
  }
  report(4, "teacher learning gate", all_tasks, detail);
}

void criterion_fidelity(const app::RunConfig& cfg, const continual::SequenceResult& run) {
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < run.tasks.size(); ++i) {
    const auto& teacher = run.tasks[i].teacher_report;
    const auto& student = run.student_reports[i];
    const bool task_ok = student.normalized >= 0.85 * teacher.normalized;
    ok = ok && task_ok;
    detail += fmt("%s%s student %.3f +- %.3f (raw %.2f) vs teacher %.3f +- %.3f (raw %.2f), anchors %.2f/%.2f",
                  detail.empty() ? "" : "; ", teacher.task.c_str(), student.normalized, student.normalized_err,
                  student.raw_mean, teacher.normalized, teacher.normalized_err, teacher.raw_mean,
                  teacher.anchors.random_mean, teacher.anchors.teacher_mean);
  }
  const auto t0 = Clock::now();
  const auto again = distill::train_student(run.merged, cfg.scenario.student, derive_seed(cfg.scenario.seed, "student"));
  const double minutes = minutes_since(t0);
  const bool same = again.student.params == run.student.student.params;
  ok = ok && minutes <= 5.0 && same;
  report(5, "distillation fidelity", ok,
         detail + fmt("; student training %.2f min (limit 5), retrain identical: %s", minutes, same ? "yes" : "no"));
}

void criterion_curve(const continual::SequenceResult& run) {
  if (!run.curve) {
    report(6, "checkpoint curve", false, "no curve was produced");
    return;
  }
  const auto& c = *run.curve;
  bool spacing = c.teacher.points.size() >= 4;
  std::string pts;
  for (std::size_t k = 0; k < c.teacher.points.size(); ++k) {
    spacing = spacing && std::fmod(c.teacher.points[k].x, 50000.0) == 0.0;
    pts += fmt("%s%.0fk: %.3f/%.3f", pts.empty() ? "" : ", ", c.teacher.points[k].x / 1000.0, c.teacher.points[k].y,
               c.student.points[k].y);
  }
  report(6, "checkpoint curve", spacing && c.mean_abs_gap <= 0.15,
         fmt("mean |teacher - student| %.3f over %zu checkpoints (tol 0.15); teacher/student %s", c.mean_abs_gap,
             c.teacher.points.size(), pts.c_str()));
}

void criterion_forgetting(const continual::SequenceResult& run) {
  const continual::ForgettingEntry* ft = nullptr;
  const continual::ForgettingEntry* di = nullptr;
  for (const auto& e : run.forgetting) (e.method == "FineTune" ? ft : di) = &e;
  if (!ft || !di) {
    report(7, "forgetting", false, "forgetting entries missing");
    return;
  }
  report(7, "forgetting", ft->rel_drop >= 0.5 && di->rel_drop <= 0.1,
         fmt("fine-tune %.3f -> %.3f (drop %.3f, need >= 0.5); distilled student %.3f -> %.3f (drop %.3f, need <= 0.1)",
             ft->before, ft->after, ft->rel_drop, di->before, di->after, di->rel_drop));
}

void criterion_no_task_input(const fs::path& run_dir, const continual::SequenceResult& run) {
  static_assert(std::is_same_v<decltype(&distill::student_act),
                               distill::StudentAction (*)(const distill::StudentPolicy&, const sim::Observation&)>);
  static_assert(std::is_same_v<decltype(&crlab_student_act),
                               crlab_status (*)(const crlab_student*, const uint8_t*, int, int, double*, int*)>);
  const nn::ParamSet stored = nn::load_checkpoint(run_dir / "student.crlp");
  bool structural = stored.at("student.input_spec").values ==
                    std::vector<double>{static_cast<double>(run.merged.height), static_cast<double>(run.merged.width)};
  for (const auto& e : stored.entries()) {
    const bool allowed = e.name.starts_with("student.l") || e.name == "student.input_spec" ||
                         e.name.starts_with("preprocess.");
    structural = structural && allowed && e.name.find("task") == std::string::npos;
  }
  const distill::StudentPolicy student = distill::StudentPolicy::from_checkpoint(stored);
  const sim::TaskSpec reach = sim::TaskSpec::defaults(sim::TaskKind::kTargetReaching);
  const sim::TaskSpec circle = sim::TaskSpec::defaults(sim::TaskKind::kTargetCircling);
  int differ = 0;
  const int n = 500;
  for (int k = 0; k < n; ++k) {
    const sim::WorldState s = sim::reset(reach, derive_seed(11, static_cast<std::uint64_t>(k))).state;
    const int a = distill::student_act(student, sim::render(s, reach, {})).greedy_action;
    const int b = distill::student_act(student, sim::render(s, circle, {})).greedy_action;
    differ += a != b;
  }
  report(8, "no task input", structural && differ > 0,
         fmt("checkpoint holds only weights, input_spec [H, W] and preprocessing: %s; act(student, obs) has no task "
             "argument; same geometry with red vs blue tag changes the greedy action in %d/%d states",
             structural ? "yes" : "no", differ, n));
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

void criterion_sequentiality(const std::string& cli, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text_file(dir / "small.cfg",
                  "seed = 5\nrandom.steps = 1000\nsrl.epochs = 2\nppo.total_timesteps = 4000\nppo.horizon = 1000\n"
                  "ppo.checkpoint_interval = 2000\ndistill.size_cap = 500\nstudent.epochs = 2\neval.n_eval = 2\n"
                  "eval.anchor_episodes = 2\ncontinual.finetune_baseline = true\ncontinual.curve_task = 1\n"
                  "continual.curve_students = 2\n");
  const std::string cfg = (dir / "small.cfg").string();
  const int probe = run_cli(cli, "continual -c \"" + cfg + "\" -o \"" + (dir / "probe").string() + "\" --probe-access",
                            dir / "probe.log");
  const int full = run_cli(cli, "continual -c \"" + cfg + "\" -o \"" + (dir / "run").string() + "\"", dir / "run.log");
  const int replay = run_cli(cli, "replay \"" + (dir / "run").string() + "\" --scratch \"" + (dir / "replay").string() + "\"",
                             dir / "replay.log");
  const std::string text = fs::exists(dir / "replay.log") ? read_text_file(dir / "replay.log") : "";
  std::size_t same = 0;
  for (std::size_t p = text.find("SAME "); p != std::string::npos; p = text.find("SAME ", p + 1)) ++same;
  const bool clean = text.find("DIFF") == std::string::npos && text.find("MISSING") == std::string::npos;
  report(9, "sequentiality and replay", probe == 5 && full == 0 && replay == 0 && clean && same > 0,
         fmt("probe exit %d (need 5); continual exit %d; replay exit %d with %zu CSVs byte-identical%s", probe, full,
             replay, same, clean ? "" : " and mismatches"));
}

void criterion_datasets(const fs::path& run_dir, const app::RunConfig& cfg, const continual::SequenceResult& run) {
  const std::size_t cap = static_cast<std::size_t>(cfg.scenario.generation.size_cap);
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < run.tasks.size(); ++i) {
    const auto& g = run.tasks[i].distill;
    const bool reach = cfg.task_kinds[i] == sim::TaskKind::kTargetReaching;
    bool episodes_ok = true;
    int max_contacts = 0;
    for (std::size_t e = 0; e < g.episodes.size(); ++e) {
      const auto& ep = g.episodes[e];
      max_contacts = std::max(max_contacts, ep.contacts);
      const bool last = e + 1 == g.episodes.size();
      if (reach) episodes_ok = episodes_ok && ep.contacts <= distill::kReachContactLimit;
      if (!reach && !last) episodes_ok = episodes_ok && ep.records == 250;
      if (!reach && last) episodes_ok = episodes_ok && ep.records <= 250;
    }
    const auto stored = distill::load_distill_dataset(run_dir / ("task" + std::to_string(i)) / "distill.crld");
    const bool round_trip = stored == g.data && distill::decode_distill_dataset(distill::encode_distill_dataset(g.data)) == g.data;
    const bool count_ok = g.data.records.size() == cap;
    ok = ok && episodes_ok && round_trip && count_ok;
    detail += fmt("%stask %zu: %zu records, %zu episodes, %s %d, round trip %s", detail.empty() ? "" : "; ", i,
                  g.data.records.size(), g.episodes.size(), reach ? "max contacts" : "full-length episodes",
                  reach ? max_contacts : static_cast<int>(g.episodes.size()) - 1, round_trip ? "ok" : "BAD");
  }
  const auto merged = distill::load_distill_dataset(run_dir / "merged.crld");
  const auto counts = merged.task_counts();
  const bool merged_ok = merged == run.merged && counts.size() == run.tasks.size() &&
                         std::all_of(counts.begin(), counts.end(), [&](const auto& kv) { return kv.second == cap; });
  report(10, "dataset contracts", ok && merged_ok,
         detail + fmt("; merged %zu records, round trip %s", merged.records.size(), merged_ok ? "ok" : "BAD"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  std::string out = "acceptance_run";
  std::string cli;
  bool quick = false;
  app.add_option("-o,--out-dir", out, "Working directory for run artifacts");
  app.add_option("--cli", cli, "Path of the command-line tool")->required();
  app.add_flag("--quick", quick, "Tiny budgets (plumbing check; criteria are expected to fail)");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path root = fs::absolute(out);
    fs::create_directories(root);
    g_log.open(root / "acceptance.txt");
    const auto t_start = Clock::now();

    criterion_reward();
    criterion_gradients();
    criterion_gae();

    std::string text = "seed = 0\ncontinual.finetune_baseline = true\ncontinual.curve_task = 1\n";
    if (quick) {
      text += "random.steps = 1000\nsrl.epochs = 2\nppo.total_timesteps = 4000\nppo.horizon = 1000\n"
              "ppo.checkpoint_interval = 1000\ndistill.size_cap = 600\nstudent.epochs = 2\n"
              "continual.curve_students = 2\n";
    } else {
      text += "continual.curve_students = 8\n";
    }
    const app::RunConfig cfg = app::parse_config(text, "acceptance config");
    const fs::path run_dir = root / "run";
    fs::remove_all(run_dir);
    store::RunDirectory dir(run_dir, app::config_snapshot(cfg));
    const auto t_run = Clock::now();
    const continual::SequenceResult run = continual::run_sequence(cfg.build(), &dir);
    note(fmt("full sequential run finished in %.1f min (artifacts in %s)", minutes_since(t_run), run_dir.c_str()));

    criterion_teacher_gate(cfg, run, 101, quick ? 4 : 20);
    criterion_fidelity(cfg, run);
    criterion_curve(run);
    criterion_forgetting(run);
    criterion_no_task_input(run_dir, run);
    criterion_sequentiality(cli, root / "sequentiality");
    criterion_datasets(run_dir, cfg, run);

    int passed = 0;
    for (const auto& v : g_verdicts) passed += v.pass;
    const std::string summary = fmt("summary: %d/%zu criteria pass (%.1f min total)", passed, g_verdicts.size(),
                                    minutes_since(t_start));
    std::printf("%s\n", summary.c_str());
    g_log << summary << "\n";
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 1;
  }
  return 0;
}
