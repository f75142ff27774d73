#pragma once

#include <cstdint>
#include <vector>

#include "qcofr/rng.hpp"

namespace qcofr {

// One complete episode. Observations, states and availability masks carry
// T+1 entries (the trailing ones feed bootstrap targets); actions, rewards
// and done flags carry T. Observations are stored as float to halve buffer
// memory; training promotes them back to double.
struct Episode {
  int n_agents = 0;
  int length = 0;  // T
  std::vector<std::vector<std::vector<float>>> obs;     // [t][agent][obs_w]
  std::vector<std::vector<std::uint8_t>> avail;         // [t][agent * n_actions]
  std::vector<std::vector<float>> state;                // [t][state_w]
  std::vector<std::vector<int>> actions;                // [t][agent]
  std::vector<double> rewards;                          // [t]
  std::vector<std::uint8_t> done;                       // [t]

  double total_reward() const {
    double s = 0.0;
    for (double r : rewards) s += r;
    return s;
  }
};

// Ring buffer of complete episodes with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void add(Episode episode) {
    if (episodes_.size() < capacity_) {
      episodes_.push_back(std::move(episode));
    } else {
      episodes_[next_] = std::move(episode);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Episode& at(std::size_t i) const { return episodes_[i]; }

  std::vector<const Episode*> sample(std::size_t count, Rng& rng) const {
    std::vector<const Episode*> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(&episodes_[rng.uniform_int(episodes_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Episode> episodes_;
};

}  // namespace qcofr
