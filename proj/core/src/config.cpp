#include "qcofr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace qcofr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

long long parse_ll(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ConfigError("config: field '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_d(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ConfigError("config: field '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_b(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: field '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(parse_ll(key, item)));
  }
  if (out.empty()) throw ConfigError("config: field '" + key + "' expects a list of integers");
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt_d(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::map<std::string, Field>& registry() {
#define QCOFR_FIELD_LL(path, member, type)                                                 \
  {path,                                                                                   \
   {[](RunConfig& c, const std::string& v) { c.member = static_cast<type>(parse_ll(path, v)); }, \
    [](const RunConfig& c) { return std::to_string(c.member); }}}
#define QCOFR_FIELD_D(path, member)                                              \
  {path,                                                                         \
   {[](RunConfig& c, const std::string& v) { c.member = parse_d(path, v); },     \
    [](const RunConfig& c) { return fmt_d(c.member); }}}
#define QCOFR_FIELD_B(path, member)                                              \
  {path,                                                                         \
   {[](RunConfig& c, const std::string& v) { c.member = parse_b(path, v); },     \
    [](const RunConfig& c) { return c.member ? std::string("true") : std::string("false"); }}}
#define QCOFR_FIELD_S(path, member)                                       \
  {path,                                                                  \
   {[](RunConfig& c, const std::string& v) { c.member = v; },             \
    [](const RunConfig& c) { return c.member; }}}
#define QCOFR_FIELD_IL(path, member)                                                  \
  {path,                                                                              \
   {[](RunConfig& c, const std::string& v) { c.member = parse_int_list(path, v); },   \
    [](const RunConfig& c) { return fmt_int_list(c.member); }}}

  static const std::map<std::string, Field> fields = {
      QCOFR_FIELD_S("run.name", name),
      QCOFR_FIELD_S("run.out_dir", out_dir),
      QCOFR_FIELD_LL("run.seed", seed, std::uint64_t),
      QCOFR_FIELD_S("env.type", env_type),
      QCOFR_FIELD_LL("env.width", env_width, int),
      QCOFR_FIELD_LL("env.height", env_height, int),
      QCOFR_FIELD_IL("env.agent_levels", agent_levels),
      QCOFR_FIELD_IL("env.food_levels", food_levels),
      QCOFR_FIELD_LL("env.sight", sight, int),
      QCOFR_FIELD_LL("env.max_steps", env_max_steps, int),
      QCOFR_FIELD_D("env.move_penalty", move_penalty),
      QCOFR_FIELD_S("env.payoff", payoff),
      QCOFR_FIELD_LL("env.matrix_agents", matrix_agents, int),
      QCOFR_FIELD_LL("env.matrix_actions", matrix_actions, int),
      QCOFR_FIELD_LL("agents.hidden", hidden, int),
      QCOFR_FIELD_B("agents.id_onehot", id_onehot),
      QCOFR_FIELD_B("agents.per_agent_params", per_agent_params),
      QCOFR_FIELD_S("mixer.variant", mixer_variant),
      QCOFR_FIELD_LL("mixer.ladders", ladders, int),
      QCOFR_FIELD_LL("mixer.depth", depth, int),
      QCOFR_FIELD_LL("mixer.single_depth", single_depth, int),
      QCOFR_FIELD_D("mixer.delta", delta),
      QCOFR_FIELD_B("mixer.igm", igm),
      QCOFR_FIELD_LL("mixer.key_width", key_width, int),
      QCOFR_FIELD_LL("vib.latent", latent, int),
      QCOFR_FIELD_D("vib.beta", beta),
      QCOFR_FIELD_B("vib.noise_to_mixer", noise_to_mixer),
      QCOFR_FIELD_D("trainer.gamma", gamma),
      QCOFR_FIELD_D("trainer.lr", lr),
      QCOFR_FIELD_D("trainer.rms_alpha", rms_alpha),
      QCOFR_FIELD_D("trainer.rms_eps", rms_eps),
      QCOFR_FIELD_LL("trainer.batch", batch, int),
      QCOFR_FIELD_LL("trainer.buffer_capacity", buffer_capacity, int),
      QCOFR_FIELD_LL("trainer.target_interval", target_interval, int),
      QCOFR_FIELD_LL("trainer.total_steps", total_steps, long long),
      QCOFR_FIELD_LL("trainer.test_interval", test_interval, long long),
      QCOFR_FIELD_LL("trainer.test_episodes", test_episodes, int),
      QCOFR_FIELD_D("trainer.eps_start", eps_start),
      QCOFR_FIELD_D("trainer.eps_end", eps_end),
      QCOFR_FIELD_LL("trainer.anneal_steps", anneal_steps, long long),
      QCOFR_FIELD_LL("trainer.updates_per_episode", updates_per_episode, int),
      QCOFR_FIELD_D("trainer.grad_clip", grad_clip),
      QCOFR_FIELD_LL("trainer.log_episodes", log_episodes, int),
  };
#undef QCOFR_FIELD_LL
#undef QCOFR_FIELD_D
#undef QCOFR_FIELD_B
#undef QCOFR_FIELD_S
#undef QCOFR_FIELD_IL
  return fields;
}

void set_field(RunConfig& cfg, const std::string& path, const std::string& value) {
  const auto& reg = registry();
  // The seed is addressable under [trainer] as well as [run].
  const std::string resolved = path == "trainer.seed" ? "run.seed" : path;
  const auto it = reg.find(resolved);
  if (it == reg.end()) throw ConfigError("config: unknown key '" + path + "'");
  it->second.set(cfg, value);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::string section;
  bool saw_env = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(source + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section == "env") saw_env = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) + ": key '" + key +
                        "' outside any section");
    set_field(cfg, section + "." + key, value);
  }
  if (!saw_env)
    throw ConfigError(source + ": missing required section [env]");
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form section.key=value");
    set_field(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
}

void validate(const RunConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (cfg.env_type != "lbf" && cfg.env_type != "matrix")
    fail("env.type must be lbf or matrix, got '" + cfg.env_type + "'");
  if (cfg.env_type == "lbf") {
    if (cfg.env_width < 1 || cfg.env_height < 1) fail("env.width/height must be positive");
    if (cfg.agent_levels.empty()) fail("env.agent_levels must list at least one agent");
    if (cfg.food_levels.empty()) fail("env.food_levels must list at least one food item");
    if (cfg.sight < 1) fail("env.sight must be >= 1");
    if (cfg.env_max_steps < 1) fail("env.max_steps must be positive");
  } else {
    if (cfg.matrix_agents < 2) fail("env.matrix_agents must be >= 2");
    if (cfg.matrix_actions < 2) fail("env.matrix_actions must be >= 2");
  }
  if (cfg.hidden < 1) fail("agents.hidden must be positive");
  if (cfg.mixer_variant != "cfn" && cfg.mixer_variant != "cfn-c" && cfg.mixer_variant != "cfn-d" &&
      cfg.mixer_variant != "vdn")
    fail("mixer.variant must be one of cfn, cfn-c, cfn-d, vdn");
  if (cfg.ladders < 1) fail("mixer.ladders must be >= 1");
  if (cfg.depth < 1) fail("mixer.depth must be >= 1");
  if (cfg.single_depth < 1) fail("mixer.single_depth must be >= 1");
  if (cfg.delta <= 0.0) fail("mixer.delta must be positive");
  if (cfg.key_width < 1) fail("mixer.key_width must be positive");
  if (cfg.latent < 1) fail("vib.latent must be positive");
  if (cfg.beta < 0.0) fail("vib.beta must be nonnegative");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) fail("trainer.gamma must be in (0, 1]");
  if (cfg.lr <= 0.0) fail("trainer.lr must be positive");
  if (!(cfg.rms_alpha > 0.0 && cfg.rms_alpha < 1.0)) fail("trainer.rms_alpha must be in (0, 1)");
  if (cfg.rms_eps <= 0.0) fail("trainer.rms_eps must be positive");
  if (cfg.batch < 1) fail("trainer.batch must be positive");
  if (cfg.buffer_capacity < cfg.batch) fail("trainer.buffer_capacity must be >= trainer.batch");
  if (cfg.target_interval < 1) fail("trainer.target_interval must be positive");
  if (cfg.total_steps < 1) fail("trainer.total_steps must be positive");
  if (cfg.test_interval < 1) fail("trainer.test_interval must be positive");
  if (cfg.test_episodes < 1) fail("trainer.test_episodes must be positive");
  if (cfg.anneal_steps < 1) fail("trainer.anneal_steps must be positive");
  if (cfg.updates_per_episode < 0) fail("trainer.updates_per_episode must be >= 0");
  if (cfg.log_episodes < 0) fail("trainer.log_episodes must be >= 0");
}

std::string to_ini(const RunConfig& cfg) {
  const auto& reg = registry();
  std::string current;
  std::string out;
  for (const auto& [path, field] : reg) {
    const auto dot = path.find('.');
    const std::string section = path.substr(0, dot);
    if (section != current) {
      if (!out.empty()) out += "\n";
      out += "[" + section + "]\n";
      current = section;
    }
    out += path.substr(dot + 1) + " = " + field.get(cfg) + "\n";
  }
  return out;
}

}  // namespace qcofr
