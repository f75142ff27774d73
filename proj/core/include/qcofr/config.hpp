#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcofr {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Merged run configuration. Parsed from an INI-style file with sections
// ([run], [env], [agents], [mixer], [vib], [trainer]); every key is typed,
// unknown keys are rejected, and dotted-path overrides (trainer.seed=7)
// are applied on top of the file.
struct RunConfig {
  // [run]
  std::string name = "run";
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  // [env]
  std::string env_type = "lbf";  // lbf | matrix
  int env_width = 10;
  int env_height = 10;
  std::vector<int> agent_levels = {1, 1, 1};
  std::vector<int> food_levels = {1, 1, 1};
  int sight = 2;
  int env_max_steps = 50;
  double move_penalty = -0.002;
  std::string payoff = "climbing";  // climbing | comma-separated tensor
  int matrix_agents = 2;
  int matrix_actions = 3;

  // [agents]
  int hidden = 64;
  bool id_onehot = true;
  bool per_agent_params = false;

  // [mixer]
  std::string mixer_variant = "cfn";  // cfn | cfn-c | cfn-d | vdn
  int ladders = 4;
  int depth = 2;
  int single_depth = 2;
  double delta = 0.01;
  bool igm = true;
  int key_width = 32;

  // [vib]
  int latent = 32;
  double beta = 1e-3;
  bool noise_to_mixer = true;  // sampled m feeds the mixer (vs mean only)

  // [trainer]
  double gamma = 0.99;
  double lr = 5e-4;
  double rms_alpha = 0.99;
  double rms_eps = 1e-5;
  int batch = 32;
  int buffer_capacity = 5000;
  int target_interval = 200;        // episodes between hard target syncs
  long long total_steps = 1000000;  // environment steps
  long long test_interval = 10000;  // environment steps between evaluations
  int test_episodes = 32;
  double eps_start = 1.0;
  double eps_end = 0.05;
  long long anneal_steps = 50000;
  int updates_per_episode = 1;
  double grad_clip = 10.0;  // <= 0 disables
  int log_episodes = 8;     // greedy episodes logged at the final evaluation
};

// Parses INI text; `source` names the input in error messages.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config_file(const std::string& path);

// Applies "section.key=value" assignments.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// Range/consistency checks; throws ConfigError naming the offending field.
void validate(const RunConfig& cfg);

// Serializes every effective field; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& cfg);

}  // namespace qcofr
