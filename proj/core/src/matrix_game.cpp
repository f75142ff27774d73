#include "qcofr/matrix_game.hpp"

#include <stdexcept>

namespace qcofr {

double matrix_step(const MatrixGameConfig& game, const std::vector<int>& joint_action) {
  if (static_cast<int>(joint_action.size()) != game.n_agents)
    throw std::invalid_argument("matrix_step: expected " + std::to_string(game.n_agents) +
                                " actions");
  std::size_t idx = 0;
  for (int a : joint_action) {
    if (a < 0 || a >= game.n_actions)
      throw std::invalid_argument("matrix_step: invalid action id " + std::to_string(a));
    idx = idx * static_cast<std::size_t>(game.n_actions) + static_cast<std::size_t>(a);
  }
  return game.payoff[idx];
}

MatrixGameConfig climbing_game() {
  MatrixGameConfig g;
  g.n_agents = 2;
  g.n_actions = 3;
  g.payoff = {11, -30, 0, -30, 7, 6, 0, 0, 5};
  return g;
}

MatrixGameEnv::MatrixGameEnv(MatrixGameConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.payoff.size() != cfg_.expected_size())
    throw std::invalid_argument("matrix game: payoff size " + std::to_string(cfg_.payoff.size()) +
                                " != " + std::to_string(cfg_.expected_size()));
}

void MatrixGameEnv::reset(std::uint64_t /*seed*/, std::vector<std::vector<double>>& obs,
                          std::vector<double>& state) {
  obs.assign(static_cast<std::size_t>(cfg_.n_agents), {1.0});
  state = {1.0};
}

StepResult MatrixGameEnv::step(const std::vector<int>& actions) {
  StepResult r;
  r.reward = matrix_step(cfg_, actions);
  r.done = true;
  r.obs.assign(static_cast<std::size_t>(cfg_.n_agents), {1.0});
  r.state = {1.0};
  return r;
}

}  // namespace qcofr
