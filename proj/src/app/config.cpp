#include "app/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>

#include "common/binio.hpp"
#include "common/error.hpp"

namespace crlab::app {

RunConfig::RunConfig() { geometry = sim::TaskSpec::defaults(sim::TaskKind::kTargetReaching); }

sim::TaskSpec RunConfig::task(sim::TaskKind kind) const {
  sim::TaskSpec t = geometry;
  const sim::TaskSpec d = sim::TaskSpec::defaults(kind);
  t.kind = kind;
  t.target_color = d.target_color;
  t.robot_color = d.robot_color;
  t.border_color = d.border_color;
  return t;
}

continual::ScenarioConfig RunConfig::build() const {
  continual::ScenarioConfig s = scenario;
  s.tasks.clear();
  for (auto k : task_kinds) s.tasks.push_back(task(k));
  return s;
}

void RunConfig::validate() const {
  if (task_kinds.empty()) throw_config("invalid tasks: list is empty");
  for (auto k : task_kinds) task(k).validate();
  build().validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw_config("invalid value for " + key + ": '" + value + "' (expected " + expected + ")");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T v{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size()) bad_value(key, value, expected);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item), "comma-separated integers"));
  return out;
}

std::string int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Ref>
Field dbl(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(key, v, "a number"); }};
}

template <typename Ref>
Field integer(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(ref(c))>;
            ref(c) = parse_number<T>(key, v, "an integer");
          }};
}

template <typename Ref>
Field boolean(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); }};
}

template <typename Ref>
Field byte(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) {
            const int x = parse_number<int>(key, v, "an integer in [0, 255]");
            if (x < 0 || x > 255) bad_value(key, v, "an integer in [0, 255]");
            ref(c) = static_cast<std::uint8_t>(x);
          }};
}

template <typename Ref>
Field list(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return int_list(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_int_list(key, v); }};
}

template <typename Ref>
Field activation(std::string key, Ref ref) {
  return {key,
          [ref](const RunConfig& c) {
            return std::string(ref(const_cast<RunConfig&>(c)) == nn::Activation::kTanh ? "tanh" : "relu");
          },
          [ref, key](RunConfig& c, const std::string& v) {
            if (v == "relu") ref(c) = nn::Activation::kReLU;
            else if (v == "tanh") ref(c) = nn::Activation::kTanh;
            else bad_value(key, v, "relu or tanh");
          }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(integer("seed", [](RunConfig& c) -> std::uint64_t& { return c.scenario.seed; }));
    f.push_back({"tasks",
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.task_kinds.size(); ++i) {
                     out += (i ? "," : "") + std::string(sim::task_name(c.task_kinds[i]));
                   }
                   return out;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.task_kinds.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) c.task_kinds.push_back(sim::parse_task(trim(item)));
                 }});
    f.push_back(dbl("arena_half_extent", [](RunConfig& c) -> double& { return c.geometry.arena_half_extent; }));
    f.push_back(dbl("step_size", [](RunConfig& c) -> double& { return c.geometry.step_size; }));
    f.push_back(dbl("contact_radius", [](RunConfig& c) -> double& { return c.geometry.contact_radius; }));
    f.push_back(dbl("circle_radius", [](RunConfig& c) -> double& { return c.geometry.circle_radius; }));
    f.push_back(dbl("robot_half_size", [](RunConfig& c) -> double& { return c.geometry.robot_half_size; }));
    f.push_back(dbl("robot_render_half_size", [](RunConfig& c) -> double& { return c.geometry.robot_render_half_size; }));
    f.push_back(dbl("tag_half_size", [](RunConfig& c) -> double& { return c.geometry.tag_half_size; }));
    f.push_back(integer("movement_window", [](RunConfig& c) -> int& { return c.geometry.movement_window; }));
    f.push_back(dbl("lambda", [](RunConfig& c) -> double& { return c.geometry.lambda; }));
    f.push_back(integer("max_steps", [](RunConfig& c) -> int& { return c.geometry.max_steps; }));
    f.push_back(integer("image_size", [](RunConfig& c) -> int& { return c.geometry.image_size; }));

    f.push_back(boolean("randomization.enabled", [](RunConfig& c) -> bool& { return c.scenario.randomization.enabled; }));
    f.push_back(byte("randomization.background_min", [](RunConfig& c) -> std::uint8_t& { return c.scenario.randomization.background_min; }));
    f.push_back(byte("randomization.background_max", [](RunConfig& c) -> std::uint8_t& { return c.scenario.randomization.background_max; }));
    f.push_back(dbl("randomization.luminosity_min", [](RunConfig& c) -> double& { return c.scenario.randomization.luminosity_min; }));
    f.push_back(dbl("randomization.luminosity_max", [](RunConfig& c) -> double& { return c.scenario.randomization.luminosity_max; }));

    f.push_back(integer("random.steps", [](RunConfig& c) -> std::int64_t& { return c.scenario.random_steps; }));
    f.push_back(integer("random.episode_steps", [](RunConfig& c) -> int& { return c.scenario.random_episode_steps; }));

    f.push_back(integer("srl.state_dim", [](RunConfig& c) -> int& { return c.scenario.srl.state_dim; }));
    f.push_back(list("srl.encoder_hidden", [](RunConfig& c) -> std::vector<int>& { return c.scenario.srl.encoder_hidden; }));
    f.push_back(list("srl.inverse_hidden", [](RunConfig& c) -> std::vector<int>& { return c.scenario.srl.inverse_hidden; }));
    f.push_back(activation("srl.activation", [](RunConfig& c) -> nn::Activation& { return c.scenario.srl.activation; }));
    f.push_back(dbl("srl.w_rec", [](RunConfig& c) -> double& { return c.scenario.srl.w_rec; }));
    f.push_back(dbl("srl.w_inv", [](RunConfig& c) -> double& { return c.scenario.srl.w_inv; }));
    f.push_back(integer("srl.epochs", [](RunConfig& c) -> int& { return c.scenario.srl.epochs; }));
    f.push_back(integer("srl.batch_size", [](RunConfig& c) -> int& { return c.scenario.srl.batch_size; }));
    f.push_back(dbl("srl.learning_rate", [](RunConfig& c) -> double& { return c.scenario.srl.learning_rate; }));
    f.push_back(integer("srl.grid", [](RunConfig& c) -> int& { return c.scenario.srl.grid; }));
    f.push_back(boolean("srl.foreground", [](RunConfig& c) -> bool& { return c.scenario.srl.foreground; }));
    f.push_back(dbl("srl.blur_sigma", [](RunConfig& c) -> double& { return c.scenario.srl.blur_sigma; }));
    f.push_back(boolean("srl.inverse_on_difference", [](RunConfig& c) -> bool& { return c.scenario.srl.inverse_on_difference; }));

    f.push_back(dbl("ppo.gamma", [](RunConfig& c) -> double& { return c.scenario.ppo.gamma; }));
    f.push_back(dbl("ppo.gae_lambda", [](RunConfig& c) -> double& { return c.scenario.ppo.gae_lambda; }));
    f.push_back(dbl("ppo.clip", [](RunConfig& c) -> double& { return c.scenario.ppo.clip; }));
    f.push_back(integer("ppo.epochs", [](RunConfig& c) -> int& { return c.scenario.ppo.epochs; }));
    f.push_back(integer("ppo.minibatch_size", [](RunConfig& c) -> int& { return c.scenario.ppo.minibatch_size; }));
    f.push_back(integer("ppo.horizon", [](RunConfig& c) -> int& { return c.scenario.ppo.horizon; }));
    f.push_back(dbl("ppo.entropy_coef", [](RunConfig& c) -> double& { return c.scenario.ppo.entropy_coef; }));
    f.push_back(dbl("ppo.value_coef", [](RunConfig& c) -> double& { return c.scenario.ppo.value_coef; }));
    f.push_back(dbl("ppo.learning_rate", [](RunConfig& c) -> double& { return c.scenario.ppo.learning_rate; }));
    f.push_back(dbl("ppo.adam_epsilon", [](RunConfig& c) -> double& { return c.scenario.ppo.adam_epsilon; }));
    f.push_back(dbl("ppo.max_grad_norm", [](RunConfig& c) -> double& { return c.scenario.ppo.max_grad_norm; }));
    f.push_back(integer("ppo.total_timesteps", [](RunConfig& c) -> std::int64_t& { return c.scenario.ppo.total_timesteps; }));
    f.push_back(integer("ppo.checkpoint_interval", [](RunConfig& c) -> std::int64_t& { return c.scenario.ppo.checkpoint_interval; }));
    f.push_back(list("ppo.hidden", [](RunConfig& c) -> std::vector<int>& { return c.scenario.ppo.hidden; }));
    f.push_back(boolean("ppo.scale_circle_reward", [](RunConfig& c) -> bool& { return c.scenario.ppo.scale_circle_reward; }));

    f.push_back(integer("distill.size_cap", [](RunConfig& c) -> int& { return c.scenario.generation.size_cap; }));
    f.push_back(boolean("distill.stochastic", [](RunConfig& c) -> bool& { return c.scenario.generation.stochastic; }));
    f.push_back(boolean("distill.randomization", [](RunConfig& c) -> bool& { return c.scenario.generation.randomization.enabled; }));

    f.push_back(list("student.hidden", [](RunConfig& c) -> std::vector<int>& { return c.scenario.student.hidden; }));
    f.push_back(integer("student.epochs", [](RunConfig& c) -> int& { return c.scenario.student.epochs; }));
    f.push_back(integer("student.batch_size", [](RunConfig& c) -> int& { return c.scenario.student.batch_size; }));
    f.push_back(dbl("student.learning_rate", [](RunConfig& c) -> double& { return c.scenario.student.learning_rate; }));
    f.push_back(integer("student.grid", [](RunConfig& c) -> int& { return c.scenario.student.grid; }));
    f.push_back(dbl("student.blur_sigma", [](RunConfig& c) -> double& { return c.scenario.student.blur_sigma; }));

    f.push_back(integer("eval.n_eval", [](RunConfig& c) -> int& { return c.scenario.n_eval; }));
    f.push_back(integer("eval.anchor_episodes", [](RunConfig& c) -> int& { return c.scenario.anchor_episodes; }));

    f.push_back(boolean("continual.finetune_baseline", [](RunConfig& c) -> bool& { return c.scenario.finetune_baseline; }));
    f.push_back(integer("continual.curve_task", [](RunConfig& c) -> int& { return c.scenario.curve_task; }));
    f.push_back(integer("continual.curve_students", [](RunConfig& c) -> int& { return c.scenario.curve_students; }));
    return f;
  }();
  return fields;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& what) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = what + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw_config(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw_config(where + ": missing key");
    const Field* field = nullptr;
    for (const auto& f : schema()) {
      if (f.key == key) field = &f;
    }
    if (!field) throw_config(where + ": unknown key '" + key + "'");
    for (const auto& s : seen) {
      if (s == key) throw_config(where + ": duplicate key '" + key + "'");
    }
    seen.push_back(key);
    try {
      field->set(cfg, value);
    } catch (const Error& e) {
      throw Error(e.kind(), where + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw_config("config file not found: " + path.string());
  return parse_config(read_text_file(path), path.string());
}

std::string config_snapshot(const RunConfig& config) {
  std::string out;
  for (const auto& f : schema()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : schema()) keys.push_back(f.key);
  return keys;
}

}  // namespace crlab::app
