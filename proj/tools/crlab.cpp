#include <crlab/crlab.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

struct ConfigDeleter {
  void operator()(crlab_config* c) const { crlab_config_free(c); }
};
using ConfigPtr = std::unique_ptr<crlab_config, ConfigDeleter>;

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { crlab_string_free(s); }
};

int report(crlab_status st) {
  if (st != CRLAB_OK) std::fprintf(stderr, "crlab: %s\n", crlab_last_error());
  return static_cast<int>(st);
}

int with_config(const std::string& path, ConfigPtr& out) {
  crlab_config* c = nullptr;
  const crlab_status st = crlab_config_load(path.c_str(), &c);
  out.reset(c);
  return report(st);
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual state-representation learning lab"};
  app.set_version_flag("--version", std::string(crlab_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string task = "reach";
  std::uint64_t seed = 0;
  std::string out;

  auto add_common = [&](CLI::App* sub, bool needs_task) {
    sub->add_option("-c,--config", config_path, "Configuration file (defaults when omitted)");
    sub->add_option("-s,--seed", seed, "Master seed");
    if (needs_task) sub->add_option("-t,--task", task, "reach or circle")->check(CLI::IsMember({"reach", "circle"}));
  };

  std::int64_t steps = 20000;
  auto* collect = app.add_subcommand("collect-random", "Collect a uniform-random transition dataset");
  add_common(collect, true);
  collect->add_option("-n,--steps", steps, "Transitions")->check(CLI::PositiveNumber);
  collect->add_option("-o,--out", out, "Output dataset")->required();

  std::string data, encoder, teacher, policy;
  auto* srl = app.add_subcommand("train-srl", "Train the state representation on a random dataset");
  add_common(srl, false);
  srl->add_option("-d,--data", data, "Random dataset")->required();
  srl->add_option("-o,--out", out, "Output encoder checkpoint")->required();

  auto* train = app.add_subcommand("train-teacher", "Train a PPO teacher on frozen features");
  add_common(train, true);
  train->add_option("-e,--encoder", encoder, "Encoder checkpoint")->required();
  train->add_option("-o,--out-dir", out, "Output directory")->required();

  int task_id = 0, size_cap = 0;
  auto* gen = app.add_subcommand("gen-distill", "Roll out a teacher and record its action distributions");
  add_common(gen, true);
  gen->add_option("--task-id", task_id, "Task index stored in the records")->check(CLI::NonNegativeNumber);
  gen->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  gen->add_option("-e,--encoder", encoder, "Encoder checkpoint")->required();
  gen->add_option("--size-cap", size_cap, "Record cap (configured value when omitted)");
  gen->add_option("-o,--out", out, "Output dataset")->required();

  std::vector<double> factors;
  std::string in;
  auto* aug = app.add_subcommand("augment", "Append luminosity-scaled copies of a distillation dataset");
  aug->add_option("-i,--in", in, "Input dataset")->required();
  aug->add_option("-f,--factor", factors, "Luminosity factor in [0.5, 1.5]")->required();
  aug->add_option("-o,--out", out, "Output dataset")->required();

  std::vector<std::string> inputs;
  auto* merge = app.add_subcommand("merge", "Merge distillation datasets");
  merge->add_option("inputs", inputs, "Datasets in task order")->required();
  merge->add_option("-o,--out", out, "Output dataset")->required();

  std::string loss_csv;
  auto* dist = app.add_subcommand("distill", "Train a student on a distillation dataset");
  add_common(dist, false);
  dist->add_option("-d,--data", data, "Distillation dataset")->required();
  dist->add_option("-o,--out", out, "Output student checkpoint")->required();
  dist->add_option("--loss-csv", loss_csv, "Per-epoch loss");

  int n_eval = 5;
  std::string anchors;
  auto* eval = app.add_subcommand("eval", "Evaluate a teacher or student");
  add_common(eval, true);
  eval->add_option("-p,--policy", policy, "Teacher or student checkpoint")->required();
  eval->add_option("-e,--encoder", encoder, "Encoder checkpoint (teachers)");
  eval->add_option("-n,--n,--episodes", n_eval, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval->add_option("--anchors", anchors, "anchors.csv for normalized scores");
  eval->add_option("-o,--out", out, "eval.csv to write");

  std::string ckpt_dir;
  auto* curve = app.add_subcommand("curve", "Distill every saved checkpoint of a teacher");
  add_common(curve, true);
  curve->add_option("--checkpoints,--checkpoints-dir", ckpt_dir, "Directory of ckpt_<timesteps>.crlp")->required();
  curve->add_option("-e,--encoder", encoder, "Encoder checkpoint")->required();
  curve->add_option("-o,--out-dir", out, "Output directory")->required();

  bool probe = false;
  auto* cont = app.add_subcommand("continual", "Run the full sequential protocol");
  cont->add_option("-c,--config", config_path, "Configuration file (defaults when omitted)");
  cont->add_option("-o,--out-dir", out, "Run directory")->required();
  cont->add_flag("--probe-access", probe, "Reopen the first task during the second (must fail)");

  std::string scratch;
  auto* replay = app.add_subcommand("replay", "Re-run a run directory and compare its CSVs");
  replay->add_option("run_dir", in, "Run directory")->required();
  replay->add_option("--scratch", scratch, "Directory for the re-run")->required();

  int nets = 100;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("-n,--nets", nets, "Random networks per loss")->check(CLI::PositiveNumber);
  grad->add_option("-s,--seed", seed, "Seed");

  std::string title;
  auto* plot = app.add_subcommand("plot", "Render metric CSVs as one SVG");
  plot->add_option("inputs", inputs, "Metric CSV files")->required();
  plot->add_option("--title", title, "Plot title");
  plot->add_option("-o,--out", out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : CRLAB_ERR_USAGE;
  }

  ConfigPtr cfg;
  const bool configured = !(*aug || *merge || *replay || *grad || *plot);
  if (configured) {
    if (const int rc = with_config(config_path, cfg)) return rc;
  }

  if (*collect) return report(crlab_collect_random(cfg.get(), task.c_str(), steps, seed, out.c_str()));
  if (*srl) {
    double acc = 0.0;
    const int rc = report(crlab_train_srl(cfg.get(), data.c_str(), seed, out.c_str(), &acc));
    if (rc == 0) std::printf("heldout_inverse_accuracy %.4f\n", acc);
    return rc;
  }
  if (*train) return report(crlab_train_teacher(cfg.get(), task.c_str(), encoder.c_str(), seed, out.c_str()));
  if (*gen) {
    return report(crlab_gen_distill(cfg.get(), task.c_str(), task_id, teacher.c_str(), encoder.c_str(), size_cap,
                                    seed, out.c_str()));
  }
  if (*aug) return report(crlab_augment(in.c_str(), factors.data(), factors.size(), out.c_str()));
  if (*merge) {
    const auto paths = c_strings(inputs);
    return report(crlab_merge(paths.data(), paths.size(), out.c_str()));
  }
  if (*dist) return report(crlab_distill(cfg.get(), data.c_str(), seed, out.c_str(), loss_csv.c_str()));
  if (*eval) {
    crlab_eval_result r{};
    const int rc = report(crlab_eval(cfg.get(), policy.c_str(), encoder.c_str(), task.c_str(), n_eval, seed,
                                     anchors.c_str(), out.c_str(), &r));
    if (rc == 0) {
      std::printf("raw_mean %.4f stderr %.4f random_mean %.4f", r.raw_mean, r.std_error, r.random_mean);
      if (!std::isnan(r.normalized)) std::printf(" normalized %.4f", r.normalized);
      std::printf("\n");
    }
    return rc;
  }
  if (*curve) {
    double gap = 0.0;
    const int rc = report(crlab_curve(cfg.get(), ckpt_dir.c_str(), encoder.c_str(), task.c_str(), seed,
                                      out.c_str(), &gap));
    if (rc == 0) std::printf("mean_abs_gap %.4f\n", gap);
    return rc;
  }
  if (*cont) return report(crlab_continual(cfg.get(), out.c_str(), probe ? 1 : 0));
  if (*replay) {
    OwnedString text;
    const crlab_status st = crlab_replay(in.c_str(), scratch.c_str(), &text.s);
    if (text.s) std::fputs(text.s, stdout);
    return report(st);
  }
  if (*grad) {
    OwnedString text;
    const crlab_status st = crlab_gradcheck(nets, seed, &text.s);
    if (text.s) std::fputs(text.s, stdout);
    return report(st);
  }
  if (*plot) {
    const auto paths = c_strings(inputs);
    return report(crlab_plot(paths.data(), paths.size(), title.c_str(), out.c_str()));
  }
  return CRLAB_ERR_USAGE;
}
