#pragma once

#include <vector>

#include "qcofr/env.hpp"

namespace qcofr {

// One-step cooperative matrix game: all agents receive the payoff tensor
// entry of the joint action. Used as an exactly verifiable harness.
struct MatrixGameConfig {
  int n_agents = 2;
  int n_actions = 3;
  std::vector<double> payoff;  // row-major, size n_actions^n_agents

  std::size_t expected_size() const {
    std::size_t s = 1;
    for (int i = 0; i < n_agents; ++i) s *= static_cast<std::size_t>(n_actions);
    return s;
  }
};

double matrix_step(const MatrixGameConfig& game, const std::vector<int>& joint_action);

// Classic climbing-game coordination payoff; repo fixture, 2 agents x 3
// actions, optimum 11 at (0, 0) guarded by -30 miscoordination penalties.
MatrixGameConfig climbing_game();

class MatrixGameEnv final : public Env {
 public:
  explicit MatrixGameEnv(MatrixGameConfig cfg);

  int n_agents() const override { return cfg_.n_agents; }
  int n_actions() const override { return cfg_.n_actions; }
  int obs_width() const override { return 1; }
  int state_width() const override { return 1; }
  int max_steps() const override { return 1; }
  void reset(std::uint64_t seed, std::vector<std::vector<double>>& obs,
             std::vector<double>& state) override;
  StepResult step(const std::vector<int>& actions) override;
  std::unique_ptr<Env> clone_fresh() const override {
    return std::make_unique<MatrixGameEnv>(cfg_);
  }

  const MatrixGameConfig& config() const { return cfg_; }

 private:
  MatrixGameConfig cfg_;
};

}  // namespace qcofr
