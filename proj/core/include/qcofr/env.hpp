#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace qcofr {

struct StepResult {
  std::vector<std::vector<double>> obs;
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
};

// Cooperative multi-agent environment with a shared team reward. Instances
// are single-owner; concurrent rollouts use independent instances.
class Env {
 public:
  virtual ~Env() = default;
  virtual int n_agents() const = 0;
  virtual int n_actions() const = 0;
  virtual int obs_width() const = 0;
  virtual int state_width() const = 0;
  virtual int max_steps() const = 0;
  virtual void reset(std::uint64_t seed, std::vector<std::vector<double>>& obs,
                     std::vector<double>& state) = 0;
  virtual StepResult step(const std::vector<int>& actions) = 0;
  virtual std::vector<std::uint8_t> avail_actions(int /*agent*/) const {
    return std::vector<std::uint8_t>(static_cast<std::size_t>(n_actions()), 1);
  }
  virtual std::unique_ptr<Env> clone_fresh() const = 0;
};

}  // namespace qcofr
