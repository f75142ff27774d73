#pragma once

#include <array>
#include <vector>

#include "qcofr/env.hpp"
#include "qcofr/rng.hpp"

namespace qcofr {

// Level-Based Foraging on a rectangular grid. A group of agents standing in
// the 4-neighborhood of a food item and all choosing `load` collect it when
// the sum of their levels reaches the food level. The team reward for a
// collected item is level_f / sum-of-all-food-levels, so a fully cleared
// board earns +1 before movement penalties.
struct LbfConfig {
  int width = 10;
  int height = 10;
  std::vector<int> agent_levels = {1, 1, 1};
  std::vector<int> food_levels = {1, 1, 1};
  int sight = 2;
  int max_steps = 50;
  double move_penalty = -0.002;

  int n_agents() const { return static_cast<int>(agent_levels.size()); }
  int n_food() const { return static_cast<int>(food_levels.size()); }
};

struct LbfState {
  std::vector<std::array<int, 2>> agent_pos;  // (row, col)
  std::vector<std::array<int, 2>> food_pos;
  std::vector<std::uint8_t> collected;
  int t = 0;
  Rng rng;
};

// Actions: 0 none, 1 up, 2 down, 3 left, 4 right, 5 load.
inline constexpr int kLbfNumActions = 6;
inline constexpr int kLbfLoad = 5;

struct LbfStepOutcome {
  double reward = 0.0;
  bool done = false;
};

LbfState lbf_reset(const LbfConfig& cfg, std::uint64_t seed);
LbfStepOutcome lbf_step(const LbfConfig& cfg, LbfState& state, const std::vector<int>& actions);
std::vector<double> lbf_observe(const LbfConfig& cfg, const LbfState& state, int agent);
std::vector<double> lbf_state_vector(const LbfConfig& cfg, const LbfState& state);
int lbf_obs_width(const LbfConfig& cfg);
int lbf_state_width(const LbfConfig& cfg);

class LbfEnv final : public Env {
 public:
  explicit LbfEnv(LbfConfig cfg) : cfg_(std::move(cfg)) {}

  int n_agents() const override { return cfg_.n_agents(); }
  int n_actions() const override { return kLbfNumActions; }
  int obs_width() const override { return lbf_obs_width(cfg_); }
  int state_width() const override { return lbf_state_width(cfg_); }
  int max_steps() const override { return cfg_.max_steps; }
  void reset(std::uint64_t seed, std::vector<std::vector<double>>& obs,
             std::vector<double>& state) override;
  StepResult step(const std::vector<int>& actions) override;
  std::unique_ptr<Env> clone_fresh() const override { return std::make_unique<LbfEnv>(cfg_); }

  const LbfConfig& config() const { return cfg_; }
  const LbfState& state() const { return state_; }

 private:
  LbfConfig cfg_;
  LbfState state_;
};

}  // namespace qcofr
