#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qcofr/agent.hpp"
#include "qcofr/config.hpp"
#include "qcofr/env.hpp"
#include "qcofr/mixer.hpp"
#include "qcofr/replay.hpp"
#include "qcofr/vib.hpp"

namespace qcofr {

// Builds the environment described by the config.
std::unique_ptr<Env> make_env(const RunConfig& cfg);

// Additive comparison baseline: plain sum of agent utilities.
double vdn_baseline_mix(std::span<const double> q);

struct TrainMetrics {
  double td_loss = 0.0;
  double vib_loss = 0.0;
  double grad_norm = 0.0;
};

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;
  std::vector<Episode> episodes;
  std::vector<std::vector<int>> greedy_joint_t0;  // per-episode first joint action
};

// Online networks, target copies, optimizer, and the batched forward /
// backward machinery. The learner owns parameter mutation; episode
// collection and evaluation only read parameter snapshots.
class Learner {
 public:
  Learner(const RunConfig& cfg, const Env& env);
  ~Learner();

  Episode collect_episode(Env& env, std::uint64_t env_seed, double epsilon, Rng& rng);
  EvalResult evaluate(const Env& env_proto, int episodes, std::uint64_t seed_base,
                      int keep_episodes);

  // Double-Q targets y[t][b] for a padded batch, evaluated with the target
  // network at the online network's greedy next joint action.
  std::vector<std::vector<double>> compute_targets(const std::vector<const Episode*>& batch);

  TrainMetrics train_step(const std::vector<const Episode*>& batch);

  // Verification hooks. freeze_batch captures targets, greedy labels and
  // noise draws; frozen_loss re-evaluates the exact training loss at the
  // current parameters with those quantities held fixed (the function the
  // tape gradient is taken of), for finite-difference oracles.
  void freeze_batch(const std::vector<const Episode*>& batch);
  struct FrozenLoss {
    double value = 0.0, td = 0.0, vib = 0.0;
    double kink_margin = 0.0;
  };
  FrozenLoss frozen_loss();
  FrozenLoss frozen_loss_backward();  // also accumulates grads into params()

  void sync_target();
  void note_episode() { ++episodes_since_sync_; }
  bool sync_due() const { return episodes_since_sync_ >= cfg_.target_interval; }
  int episodes_since_sync() const { return episodes_since_sync_; }

  ParamStore& params() { return online_; }
  const ParamStore& params() const { return online_; }
  const ParamStore& target() const { return target_; }
  const MixerNet& mixer() const { return mixer_; }
  const RunConfig& config() const { return cfg_; }
  int input_width() const { return input_width_; }
  Rng& train_rng() { return rng_train_; }

  // Plain forward of all agents for one environment step (rows = n agents).
  void agents_step(const ParamStore& store, const std::vector<std::vector<double>>& obs,
                   const std::vector<int>& last_actions, std::vector<double>& hidden,
                   std::vector<double>& q_out) const;

 private:
  struct BatchData;
  struct LossVars;
  void build_batch(const std::vector<const Episode*>& batch, BatchData& data);
  void target_pass(BatchData& data);
  void prepare(const std::vector<const Episode*>& batch);
  LossVars build_loss(Tape& tape, BatchData& data, bool reuse_unroll);

  RunConfig cfg_;
  int n_agents_, n_actions_, obs_width_, state_width_, input_width_;
  bool use_vib_;

  ParamStore online_, target_;
  std::vector<AgentNet> agents_on_, agents_tg_;  // one entry when shared
  VibNet vib_on_, vib_tg_;
  MixerNet mixer_, mixer_tg_;
  RmsProp opt_;
  Rng rng_train_;
  int episodes_since_sync_ = 0;

  Tape tape_;
  std::unique_ptr<BatchData> scratch_;
};

struct EvalRecord {
  long long step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

struct RunSummary {
  long long env_steps = 0;
  long long episodes = 0;
  double final_eval_mean = 0.0;
  double final_eval_std = 0.0;
  double best_eval_mean = 0.0;
  std::vector<EvalRecord> evals;
  std::string out_dir;
  std::string checkpoint_path;
  std::string metrics_path;
  std::string episode_log_path;
};

// Full training per the standard loop: collect one episode, take
// updates_per_episode gradient steps, sync the target periodically, evaluate
// greedily every test_interval environment steps. Writes metrics.csv,
// config.ini, episodes.jsonl, summary.json and a final checkpoint under
// cfg.out_dir.
RunSummary run_training(const RunConfig& cfg, std::ostream* progress = nullptr);

}  // namespace qcofr
