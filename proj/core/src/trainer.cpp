#include "qcofr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "qcofr/checkpoint.hpp"
#include "qcofr/episode_log.hpp"
#include "qcofr/lbf.hpp"
#include "qcofr/matrix_game.hpp"

namespace qcofr {

std::unique_ptr<Env> make_env(const RunConfig& cfg) {
  if (cfg.env_type == "lbf") {
    LbfConfig lc;
    lc.width = cfg.env_width;
    lc.height = cfg.env_height;
    lc.agent_levels = cfg.agent_levels;
    lc.food_levels = cfg.food_levels;
    lc.sight = cfg.sight;
    lc.max_steps = cfg.env_max_steps;
    lc.move_penalty = cfg.move_penalty;
    return std::make_unique<LbfEnv>(lc);
  }
  if (cfg.env_type == "matrix") {
    MatrixGameConfig mc;
    if (cfg.payoff == "climbing") {
      mc = climbing_game();
    } else {
      mc.n_agents = cfg.matrix_agents;
      mc.n_actions = cfg.matrix_actions;
      std::stringstream ss(cfg.payoff);
      std::string item;
      while (std::getline(ss, item, ',')) mc.payoff.push_back(std::stod(item));
      if (mc.payoff.size() != mc.expected_size())
        throw ConfigError("env.payoff lists " + std::to_string(mc.payoff.size()) +
                          " entries, expected " + std::to_string(mc.expected_size()));
    }
    return std::make_unique<MatrixGameEnv>(mc);
  }
  throw ConfigError("unknown env.type '" + cfg.env_type + "'");
}

double vdn_baseline_mix(std::span<const double> q) {
  double s = 0.0;
  for (double v : q) s += v;
  return s;
}

// Per-timestep, per-agent padded batch views plus everything the combined
// forward needs. Indexing convention: [t][agent], batch rows inside.
struct Learner::BatchData {
  int B = 0, T = 0;
  std::vector<std::vector<std::vector<double>>> x;      // [t][i] (B x in)
  std::vector<std::vector<std::vector<std::uint8_t>>> avail;  // [t][i] (B*U)
  std::vector<std::vector<double>> state;               // [t] (B x S)
  std::vector<std::vector<std::vector<int>>> chosen;    // [t][i] (B)
  std::vector<std::vector<std::vector<int>>> u_star;    // [t][i] (B)
  std::vector<std::vector<std::vector<double>>> eps;    // [t][i] (B x M)
  std::vector<std::vector<double>> reward;              // [t] (B)
  std::vector<std::vector<double>> mask;                // [t] (B)
  std::vector<std::vector<std::uint8_t>> done;          // [t] (B)
  std::vector<std::vector<double>> y;                   // [t] (B)
  double mask_sum = 0.0;

  // tape handles for the online unroll
  std::vector<std::vector<Var>> q_vars;  // [t][i]
  std::vector<std::vector<Var>> h_vars;  // [t][i]
};

namespace {

int agent_count(const RunConfig& cfg, const Env& env) { return env.n_agents(); }

}  // namespace

Learner::Learner(const RunConfig& cfg, const Env& env)
    : cfg_(cfg),
      n_agents_(agent_count(cfg, env)),
      n_actions_(env.n_actions()),
      obs_width_(env.obs_width()),
      state_width_(env.state_width()),
      input_width_(env.obs_width() + env.n_actions() + (cfg.id_onehot ? env.n_agents() : 0)),
      use_vib_(cfg.mixer_variant != "vdn"),
      opt_(cfg.lr, cfg.rms_alpha, cfg.rms_eps),
      rng_train_(cfg.seed ^ 0x7464726e5f726e67ULL) {
  Rng init_rng(cfg.seed);
  const AgentNetConfig acfg{input_width_, n_actions_, cfg.hidden};
  const int copies = cfg.per_agent_params ? n_agents_ : 1;
  for (int c = 0; c < copies; ++c) {
    const std::string prefix = copies == 1 ? "agent" : "agent" + std::to_string(c);
    // Same init sequence for online and target; target is overwritten by the
    // sync below anyway.
    Rng r1 = init_rng.split(static_cast<std::uint64_t>(c) * 2 + 1);
    Rng r2 = r1;
    agents_on_.push_back(AgentNet::create(online_, acfg, r1, prefix));
    agents_tg_.push_back(AgentNet::create(target_, acfg, r2, prefix));
  }

  MixerConfig mcfg;
  mcfg.n_agents = n_agents_;
  mcfg.ladders = cfg.ladders;
  mcfg.depth = cfg.depth;
  mcfg.single_depth = cfg.single_depth;
  mcfg.delta = cfg.delta;
  mcfg.variant = mixer_variant_from_string(cfg.mixer_variant);
  mcfg.igm = cfg.igm;
  mcfg.key_width = cfg.key_width;
  mcfg.latent = cfg.latent;
  mcfg.state_width = state_width_;
  {
    Rng r1 = init_rng.split(1001);
    Rng r2 = r1;
    mixer_ = MixerNet::create(online_, mcfg, r1);
    mixer_tg_ = MixerNet::create(target_, mcfg, r2);
  }

  if (use_vib_) {
    VibConfig vcfg;
    vcfg.hidden_width = cfg.hidden;
    vcfg.latent = cfg.latent;
    vcfg.n_actions = n_actions_;
    vcfg.beta = cfg.beta;
    Rng r1 = init_rng.split(2001);
    Rng r2 = r1;
    vib_on_ = VibNet::create(online_, vcfg, r1);
    vib_tg_ = VibNet::create(target_, vcfg, r2);
  }

  target_.copy_values_from(online_);
  scratch_ = std::make_unique<BatchData>();
}

Learner::~Learner() = default;

void Learner::sync_target() {
  target_.copy_values_from(online_);
  episodes_since_sync_ = 0;
}

void Learner::agents_step(const ParamStore& store, const std::vector<std::vector<double>>& obs,
                          const std::vector<int>& last_actions, std::vector<double>& hidden,
                          std::vector<double>& q_out) const {
  const int H = cfg_.hidden;
  q_out.resize(static_cast<std::size_t>(n_agents_) * n_actions_);
  std::vector<double> h_next(hidden.size());
  AgentScratch scratch;
  const auto& nets = &store == &target_ ? agents_tg_ : agents_on_;
  if (!cfg_.per_agent_params) {
    std::vector<double> x(static_cast<std::size_t>(n_agents_) * input_width_);
    for (int i = 0; i < n_agents_; ++i) {
      const auto row = build_agent_input(obs[static_cast<std::size_t>(i)],
                                         last_actions[static_cast<std::size_t>(i)], n_actions_, i,
                                         n_agents_, cfg_.id_onehot);
      std::copy(row.begin(), row.end(), x.begin() + static_cast<std::size_t>(i) * input_width_);
    }
    agent_forward(store, nets[0], x.data(), n_agents_, hidden.data(), q_out.data(), h_next.data(),
                  scratch);
  } else {
    for (int i = 0; i < n_agents_; ++i) {
      const auto row = build_agent_input(obs[static_cast<std::size_t>(i)],
                                         last_actions[static_cast<std::size_t>(i)], n_actions_, i,
                                         n_agents_, cfg_.id_onehot);
      agent_forward(store, nets[static_cast<std::size_t>(i)], row.data(), 1,
                    hidden.data() + static_cast<std::size_t>(i) * H,
                    q_out.data() + static_cast<std::size_t>(i) * n_actions_,
                    h_next.data() + static_cast<std::size_t>(i) * H, scratch);
    }
  }
  hidden = std::move(h_next);
}

Episode Learner::collect_episode(Env& env, std::uint64_t env_seed, double epsilon, Rng& rng) {
  Episode ep;
  ep.n_agents = n_agents_;
  std::vector<std::vector<double>> obs;
  std::vector<double> state;
  env.reset(env_seed, obs, state);

  std::vector<double> hidden(static_cast<std::size_t>(n_agents_) * cfg_.hidden, 0.0);
  std::vector<double> q;
  std::vector<int> last_actions(static_cast<std::size_t>(n_agents_), -1);

  const auto push_frame = [&](const std::vector<std::vector<double>>& o,
                              const std::vector<double>& s) {
    std::vector<std::vector<float>> of;
    for (const auto& v : o) of.emplace_back(v.begin(), v.end());
    ep.obs.push_back(std::move(of));
    ep.state.emplace_back(s.begin(), s.end());
    std::vector<std::uint8_t> av;
    for (int i = 0; i < n_agents_; ++i) {
      const auto ai = env.avail_actions(i);
      av.insert(av.end(), ai.begin(), ai.end());
    }
    ep.avail.push_back(std::move(av));
  };

  push_frame(obs, state);
  for (int t = 0; t < env.max_steps(); ++t) {
    agents_step(online_, obs, last_actions, hidden, q);
    std::vector<int> actions(static_cast<std::size_t>(n_agents_));
    for (int i = 0; i < n_agents_; ++i) {
      const auto avail = env.avail_actions(i);
      actions[static_cast<std::size_t>(i)] = select_action(
          std::span<const double>(q.data() + static_cast<std::size_t>(i) * n_actions_,
                                  static_cast<std::size_t>(n_actions_)),
          epsilon, avail, rng);
    }
    StepResult r = env.step(actions);
    ep.actions.push_back(actions);
    ep.rewards.push_back(r.reward);
    ep.done.push_back(r.done ? 1 : 0);
    ep.length += 1;
    obs = std::move(r.obs);
    state = std::move(r.state);
    push_frame(obs, state);
    last_actions = ep.actions.back();
    if (r.done) break;
  }
  return ep;
}

EvalResult Learner::evaluate(const Env& env_proto, int episodes, std::uint64_t seed_base,
                             int keep_episodes) {
  EvalResult out;
  std::vector<double> returns;
  Rng greedy_rng(0);  // never consulted at epsilon = 0
  for (int e = 0; e < episodes; ++e) {
    auto env = env_proto.clone_fresh();
    Episode ep = collect_episode(*env, seed_base + static_cast<std::uint64_t>(e), 0.0, greedy_rng);
    returns.push_back(ep.total_reward());
    if (!ep.actions.empty()) out.greedy_joint_t0.push_back(ep.actions.front());
    if (static_cast<int>(out.episodes.size()) < keep_episodes)
      out.episodes.push_back(std::move(ep));
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  out.mean_return = mean;
  out.std_return = std::sqrt(var / static_cast<double>(returns.size()));
  return out;
}

void Learner::build_batch(const std::vector<const Episode*>& batch, BatchData& d) {
  const int B = static_cast<int>(batch.size());
  int T = 0;
  for (const Episode* e : batch) T = std::max(T, e->length);
  d.B = B;
  d.T = T;
  const int U = n_actions_, M = cfg_.latent, in = input_width_;

  d.x.assign(static_cast<std::size_t>(T) + 1, {});
  d.avail.assign(static_cast<std::size_t>(T) + 1, {});
  d.state.assign(static_cast<std::size_t>(T) + 1,
                 std::vector<double>(static_cast<std::size_t>(B) * state_width_, 0.0));
  d.chosen.assign(static_cast<std::size_t>(T), {});
  d.u_star.assign(static_cast<std::size_t>(T) + 1, {});
  d.eps.assign(static_cast<std::size_t>(T), {});
  d.reward.assign(static_cast<std::size_t>(T), std::vector<double>(B, 0.0));
  d.mask.assign(static_cast<std::size_t>(T), std::vector<double>(B, 0.0));
  d.done.assign(static_cast<std::size_t>(T), std::vector<std::uint8_t>(B, 1));
  d.y.assign(static_cast<std::size_t>(T), std::vector<double>(B, 0.0));
  d.mask_sum = 0.0;

  for (int t = 0; t <= T; ++t) {
    d.x[t].assign(static_cast<std::size_t>(n_agents_),
                  std::vector<double>(static_cast<std::size_t>(B) * in, 0.0));
    d.avail[t].assign(static_cast<std::size_t>(n_agents_),
                      std::vector<std::uint8_t>(static_cast<std::size_t>(B) * U, 1));
    d.u_star[t].assign(static_cast<std::size_t>(n_agents_), std::vector<int>(B, 0));
    if (t < T) {
      d.chosen[t].assign(static_cast<std::size_t>(n_agents_), std::vector<int>(B, 0));
      d.eps[t].assign(static_cast<std::size_t>(n_agents_),
                      std::vector<double>(static_cast<std::size_t>(B) * M, 0.0));
    }
    for (int b = 0; b < B; ++b) {
      const Episode& ep = *batch[static_cast<std::size_t>(b)];
      if (t > ep.length) continue;
      for (int i = 0; i < n_agents_; ++i) {
        const auto& o = ep.obs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
        const int last = t == 0 ? -1 : ep.actions[static_cast<std::size_t>(t) - 1]
                                                 [static_cast<std::size_t>(i)];
        double* row = d.x[t][static_cast<std::size_t>(i)].data() +
                      static_cast<std::size_t>(b) * in;
        for (std::size_t k = 0; k < o.size(); ++k) row[k] = o[k];
        if (last >= 0) row[obs_width_ + last] = 1.0;
        if (cfg_.id_onehot) row[obs_width_ + U + i] = 1.0;
        std::memcpy(d.avail[t][static_cast<std::size_t>(i)].data() +
                        static_cast<std::size_t>(b) * U,
                    ep.avail[static_cast<std::size_t>(t)].data() +
                        static_cast<std::size_t>(i) * U,
                    static_cast<std::size_t>(U));
      }
      const auto& st = ep.state[static_cast<std::size_t>(t)];
      for (std::size_t k = 0; k < st.size(); ++k)
        d.state[t][static_cast<std::size_t>(b) * state_width_ + k] = st[k];
      if (t < ep.length) {
        for (int i = 0; i < n_agents_; ++i)
          d.chosen[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] =
              ep.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
        d.reward[t][static_cast<std::size_t>(b)] = ep.rewards[static_cast<std::size_t>(t)];
        d.mask[t][static_cast<std::size_t>(b)] = 1.0;
        d.done[t][static_cast<std::size_t>(b)] = ep.done[static_cast<std::size_t>(t)];
        d.mask_sum += 1.0;
      }
    }
  }
  if (use_vib_)
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n_agents_; ++i)
        for (double& v : d.eps[t][static_cast<std::size_t>(i)]) v = rng_train_.gauss();
}

// Plain target-network pass over the batch; fills d.y.
void Learner::target_pass(BatchData& d) {
  const int B = d.B, T = d.T, U = n_actions_, H = cfg_.hidden, M = cfg_.latent;
  AgentScratch ascr;
  MixerScratch mscr;
  std::vector<std::vector<double>> h_tg(
      static_cast<std::size_t>(n_agents_),
      std::vector<double>(static_cast<std::size_t>(B) * H, 0.0));
  std::vector<double> h_next(static_cast<std::size_t>(B) * H);
  std::vector<double> q_tg(static_cast<std::size_t>(B) * U);
  std::vector<double> mu(static_cast<std::size_t>(B) * M);
  std::vector<double> mpool(static_cast<std::size_t>(B) * M);
  std::vector<double> qsel(static_cast<std::size_t>(B) * n_agents_);
  std::vector<double> qtot(static_cast<std::size_t>(B));
  std::vector<double> vib_scr;

  for (int t = 0; t <= T; ++t) {
    std::fill(mpool.begin(), mpool.end(), 0.0);
    for (int i = 0; i < n_agents_; ++i) {
      const AgentNet& net = agents_tg_[cfg_.per_agent_params ? static_cast<std::size_t>(i) : 0];
      agent_forward(target_, net, d.x[t][static_cast<std::size_t>(i)].data(), B,
                    h_tg[static_cast<std::size_t>(i)].data(), q_tg.data(), h_next.data(), ascr);
      h_tg[static_cast<std::size_t>(i)] = h_next;
      if (t == 0) continue;  // bootstrap values are only needed from t = 1
      // Double-Q: the ONLINE network's greedy action, evaluated by the target.
      for (int b = 0; b < B; ++b) {
        const int a = d.u_star[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(b)];
        qsel[static_cast<std::size_t>(b) * n_agents_ + i] =
            q_tg[static_cast<std::size_t>(b) * U + a];
      }
      if (use_vib_) {
        // Evaluation-style assistive input: m = mu, no noise on the target.
        vib_encode_mean(target_, vib_tg_, h_tg[static_cast<std::size_t>(i)].data(), B, mu.data(),
                        vib_scr);
        for (std::size_t k = 0; k < mpool.size(); ++k)
          mpool[k] += mu[k] / static_cast<double>(n_agents_);
      }
    }
    if (t == 0) continue;
    mixer_forward(target_, mixer_tg_, qsel.data(), mpool.data(), d.state[t].data(), B, qtot.data(),
                  mscr);
    for (int b = 0; b < B; ++b) {
      if (d.mask[t - 1][static_cast<std::size_t>(b)] == 0.0) continue;
      const double bootstrap =
          d.done[t - 1][static_cast<std::size_t>(b)] ? 0.0 : cfg_.gamma * qtot[static_cast<std::size_t>(b)];
      d.y[t - 1][static_cast<std::size_t>(b)] =
          d.reward[t - 1][static_cast<std::size_t>(b)] + bootstrap;
    }
  }
}

std::vector<std::vector<double>> Learner::compute_targets(
    const std::vector<const Episode*>& batch) {
  BatchData& d = *scratch_;
  build_batch(batch, d);

  // Online unroll (plain) for the greedy next actions.
  const int B = d.B, U = n_actions_, H = cfg_.hidden;
  AgentScratch ascr;
  std::vector<std::vector<double>> h_on(
      static_cast<std::size_t>(n_agents_),
      std::vector<double>(static_cast<std::size_t>(B) * H, 0.0));
  std::vector<double> h_next(static_cast<std::size_t>(B) * H);
  std::vector<double> q_on(static_cast<std::size_t>(B) * U);
  for (int t = 0; t <= d.T; ++t) {
    for (int i = 0; i < n_agents_; ++i) {
      const AgentNet& net = agents_on_[cfg_.per_agent_params ? static_cast<std::size_t>(i) : 0];
      agent_forward(online_, net, d.x[t][static_cast<std::size_t>(i)].data(), B,
                    h_on[static_cast<std::size_t>(i)].data(), q_on.data(), h_next.data(), ascr);
      h_on[static_cast<std::size_t>(i)] = h_next;
      for (int b = 0; b < B; ++b) {
        const std::uint8_t* av = d.avail[t][static_cast<std::size_t>(i)].data() +
                                 static_cast<std::size_t>(b) * U;
        d.u_star[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] = greedy_action(
            std::span<const double>(q_on.data() + static_cast<std::size_t>(b) * U,
                                    static_cast<std::size_t>(U)),
            std::span<const std::uint8_t>(av, static_cast<std::size_t>(U)));
      }
    }
  }
  target_pass(d);
  return d.y;
}

struct Learner::LossVars {
  Var total, td, vib;
};

// Phase A: pad the batch, unroll the online networks on the member tape,
// read greedy actions off the recorded values (double-Q action selection and
// VIB targets), then run the target pass to fix y.
void Learner::prepare(const std::vector<const Episode*>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  BatchData& d = *scratch_;
  build_batch(batch, d);
  const int B = d.B, T = d.T, U = n_actions_;

  tape_.clear();
  std::vector<AgentVars> avars;
  for (AgentNet& n : agents_on_) avars.push_back(agent_leaves(tape_, online_, n));

  d.q_vars.assign(static_cast<std::size_t>(T) + 1, {});
  d.h_vars.assign(static_cast<std::size_t>(T) + 1, {});
  std::vector<Var> h(static_cast<std::size_t>(n_agents_));
  for (int i = 0; i < n_agents_; ++i)
    h[static_cast<std::size_t>(i)] = tape_.zeros({B, cfg_.hidden});
  for (int t = 0; t <= T; ++t) {
    d.q_vars[t].resize(static_cast<std::size_t>(n_agents_));
    d.h_vars[t].resize(static_cast<std::size_t>(n_agents_));
    for (int i = 0; i < n_agents_; ++i) {
      const AgentVars& av = avars[cfg_.per_agent_params ? static_cast<std::size_t>(i) : 0];
      const Var x = tape_.constant({B, input_width_}, d.x[t][static_cast<std::size_t>(i)]);
      const AgentStepVars step = agent_forward_tape(tape_, av, x, h[static_cast<std::size_t>(i)]);
      h[static_cast<std::size_t>(i)] = step.h;
      d.q_vars[t][static_cast<std::size_t>(i)] = step.q;
      d.h_vars[t][static_cast<std::size_t>(i)] = step.h;
      const auto qv = tape_.value(step.q);
      for (int b = 0; b < B; ++b) {
        const std::uint8_t* avm = d.avail[t][static_cast<std::size_t>(i)].data() +
                                  static_cast<std::size_t>(b) * U;
        d.u_star[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] = greedy_action(
            std::span<const double>(qv.data() + static_cast<std::size_t>(b) * U,
                                    static_cast<std::size_t>(U)),
            std::span<const std::uint8_t>(avm, static_cast<std::size_t>(U)));
      }
    }
  }
  target_pass(d);
}

// Phase B: assemble the combined loss (mean masked TD error plus the
// variational term) from the frozen batch quantities. With reuse_unroll the
// member tape's recorded unroll is extended in place; otherwise the given
// tape gets a fresh unroll at the current parameter values.
Learner::LossVars Learner::build_loss(Tape& tape, BatchData& d, bool reuse_unroll) {
  const int B = d.B, T = d.T, U = n_actions_, M = cfg_.latent;

  std::vector<std::vector<Var>> q_vars, h_vars;
  MixerVars mvars = mixer_leaves(tape, online_, mixer_);
  VibVars vvars{};
  if (use_vib_) vvars = vib_leaves(tape, online_, vib_on_);
  if (reuse_unroll) {
    q_vars = d.q_vars;
    h_vars = d.h_vars;
  } else {
    std::vector<AgentVars> avars;
    for (AgentNet& n : agents_on_) avars.push_back(agent_leaves(tape, online_, n));
    q_vars.assign(static_cast<std::size_t>(T) + 1, {});
    h_vars.assign(static_cast<std::size_t>(T) + 1, {});
    std::vector<Var> h(static_cast<std::size_t>(n_agents_));
    for (int i = 0; i < n_agents_; ++i)
      h[static_cast<std::size_t>(i)] = tape.zeros({B, cfg_.hidden});
    for (int t = 0; t <= T; ++t) {
      q_vars[t].resize(static_cast<std::size_t>(n_agents_));
      h_vars[t].resize(static_cast<std::size_t>(n_agents_));
      for (int i = 0; i < n_agents_; ++i) {
        const AgentVars& av = avars[cfg_.per_agent_params ? static_cast<std::size_t>(i) : 0];
        const Var x = tape.constant({B, input_width_}, d.x[t][static_cast<std::size_t>(i)]);
        const AgentStepVars step = agent_forward_tape(tape, av, x, h[static_cast<std::size_t>(i)]);
        h[static_cast<std::size_t>(i)] = step.h;
        q_vars[t][static_cast<std::size_t>(i)] = step.q;
        h_vars[t][static_cast<std::size_t>(i)] = step.h;
      }
    }
  }

  Var td_sum, vib_sum;
  std::vector<double> onehot(static_cast<std::size_t>(B) * U);
  for (int t = 0; t < T; ++t) {
    std::vector<Var> q_cols(static_cast<std::size_t>(n_agents_));
    Var m_sum, vib_rows_sum;
    for (int i = 0; i < n_agents_; ++i) {
      std::fill(onehot.begin(), onehot.end(), 0.0);
      for (int b = 0; b < B; ++b)
        onehot[static_cast<std::size_t>(b) * U +
               d.chosen[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(b)]] = 1.0;
      const Var sel = tape.constant({B, U}, onehot);
      q_cols[static_cast<std::size_t>(i)] =
          tape.row_sum(tape.mul(q_vars[t][static_cast<std::size_t>(i)], sel));

      if (use_vib_) {
        const Var mu = vib_mu_tape(tape, vvars, h_vars[t][static_cast<std::size_t>(i)]);
        const Var eps = tape.constant({B, M}, d.eps[t][static_cast<std::size_t>(i)]);
        const Var m = tape.add(mu, eps);
        const Var m_for_pool = cfg_.noise_to_mixer ? m : mu;
        m_sum = i == 0 ? m_for_pool : tape.add(m_sum, m_for_pool);
        std::fill(onehot.begin(), onehot.end(), 0.0);
        for (int b = 0; b < B; ++b)
          onehot[static_cast<std::size_t>(b) * U +
                 d.u_star[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(b)]] = 1.0;
        const Var star = tape.constant({B, U}, onehot);
        const Var rows = vib_loss_rows_tape(tape, vvars, vib_on_.cfg, m, mu, star);
        vib_rows_sum = i == 0 ? rows : tape.add(vib_rows_sum, rows);
      }
    }
    const Var q_joint = tape.concat_cols(q_cols);
    Var m_pool, s_var;
    if (use_vib_) m_pool = tape.affine(m_sum, 1.0 / n_agents_, 0.0);
    if (mixer_.cfg.variant == MixerVariant::kCfn || mixer_.cfg.variant == MixerVariant::kCfnC) {
      s_var = tape.constant({B, state_width_}, d.state[t]);
    } else {
      s_var = q_joint;  // unused by cfn-d / vdn
      if (!m_pool.valid()) m_pool = q_joint;
    }
    const Var qtot = mixer_forward_tape(tape, mvars, mixer_.cfg, q_joint, m_pool, s_var);

    const Var mask = tape.constant({B, 1}, d.mask[t]);
    const Var y = tape.constant({B, 1}, d.y[t]);
    const Var td = tape.sum(tape.mul(tape.square(tape.sub(qtot, y)), mask));
    td_sum = t == 0 ? td : tape.add(td_sum, td);
    if (use_vib_) {
      const Var vib_masked =
          tape.sum(tape.mul(tape.affine(vib_rows_sum, 1.0 / n_agents_, 0.0), mask));
      vib_sum = t == 0 ? vib_masked : tape.add(vib_sum, vib_masked);
    }
  }

  const double inv_mask = d.mask_sum > 0.0 ? 1.0 / d.mask_sum : 0.0;
  LossVars out;
  out.td = tape.affine(td_sum, inv_mask, 0.0);
  out.total = out.td;
  if (use_vib_) {
    out.vib = tape.affine(vib_sum, inv_mask, 0.0);
    out.total = tape.add(out.td, out.vib);
  }
  return out;
}

TrainMetrics Learner::train_step(const std::vector<const Episode*>& batch) {
  prepare(batch);
  const LossVars loss = build_loss(tape_, *scratch_, true);

  TrainMetrics metrics;
  metrics.td_loss = tape_.scalar(loss.td);
  if (use_vib_) metrics.vib_loss = tape_.scalar(loss.vib);
  if (!std::isfinite(tape_.scalar(loss.total)))
    throw std::runtime_error("train_step: non-finite loss (td=" + std::to_string(metrics.td_loss) +
                             ", vib=" + std::to_string(metrics.vib_loss) + ")");

  online_.zero_grad();
  tape_.backward(loss.total);
  metrics.grad_norm = online_.grad_norm();
  if (cfg_.grad_clip > 0.0 && metrics.grad_norm > cfg_.grad_clip)
    online_.scale_grads(cfg_.grad_clip / metrics.grad_norm);
  opt_.step(online_);
  return metrics;
}

void Learner::freeze_batch(const std::vector<const Episode*>& batch) { prepare(batch); }

Learner::FrozenLoss Learner::frozen_loss() {
  Tape tape;
  const LossVars loss = build_loss(tape, *scratch_, false);
  FrozenLoss out;
  out.value = tape.scalar(loss.total);
  out.td = tape.scalar(loss.td);
  out.vib = use_vib_ ? tape.scalar(loss.vib) : 0.0;
  out.kink_margin = tape.min_kink_margin();
  return out;
}

Learner::FrozenLoss Learner::frozen_loss_backward() {
  Tape tape;
  const LossVars loss = build_loss(tape, *scratch_, false);
  FrozenLoss out;
  out.value = tape.scalar(loss.total);
  out.td = tape.scalar(loss.td);
  out.vib = use_vib_ ? tape.scalar(loss.vib) : 0.0;
  out.kink_margin = tape.min_kink_margin();
  tape.backward(loss.total);
  return out;
}

RunSummary run_training(const RunConfig& cfg, std::ostream* progress) {
  validate(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  const auto env = make_env(cfg);
  Learner learner(cfg, *env);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  EpsilonSchedule schedule{cfg.eps_start, cfg.eps_end, cfg.anneal_steps};

  Rng rng_actions(cfg.seed ^ 0x616374696f6e73ULL);
  Rng rng_env(cfg.seed ^ 0x656e7673656564ULL);
  Rng rng_sample(cfg.seed ^ 0x73616d706c6572ULL);

  RunSummary summary;
  summary.out_dir = cfg.out_dir;
  summary.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  summary.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint_final.qcfr").string();
  summary.episode_log_path = (fs::path(cfg.out_dir) / "episodes.jsonl").string();

  {
    std::ofstream cfg_out(fs::path(cfg.out_dir) / "config.ini");
    cfg_out << to_ini(cfg);
  }
  std::ofstream metrics(summary.metrics_path);
  metrics << "step,episode,td_loss,vib_loss,grad_norm,eval_return,epsilon\n";
  metrics.precision(10);

  long long steps = 0, episode = 0, next_eval = 0;
  double best_eval = -std::numeric_limits<double>::infinity();
  std::vector<Episode> logged_episodes;

  const auto do_eval = [&]() {
    const std::uint64_t eval_seed =
        cfg.seed * 0x10001ULL + static_cast<std::uint64_t>(summary.evals.size()) * 7919ULL;
    EvalResult ev = learner.evaluate(*env, cfg.test_episodes, eval_seed, cfg.log_episodes);
    summary.evals.push_back({steps, ev.mean_return, ev.std_return});
    best_eval = std::max(best_eval, ev.mean_return);
    summary.final_eval_mean = ev.mean_return;
    summary.final_eval_std = ev.std_return;
    logged_episodes = std::move(ev.episodes);
    metrics << steps << "," << episode << ",,,," << ev.mean_return << ","
            << schedule.at(steps) << "\n";
    if (progress)
      (*progress) << "step " << steps << " episode " << episode << " eval "
                  << ev.mean_return << " +- " << ev.std_return << "\n";
  };

  while (steps < cfg.total_steps) {
    const double eps = schedule.at(steps);
    Episode ep = learner.collect_episode(*env, rng_env.next_u64(), eps, rng_actions);
    steps += ep.length;
    ++episode;
    buffer.add(std::move(ep));
    learner.note_episode();

    TrainMetrics tm{};
    bool trained = false;
    if (buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
      for (int u = 0; u < cfg.updates_per_episode; ++u) {
        const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch), rng_sample);
        tm = learner.train_step(batch);
        trained = true;
      }
    }
    if (learner.sync_due()) learner.sync_target();

    metrics << steps << "," << episode << ",";
    if (trained)
      metrics << tm.td_loss << "," << tm.vib_loss << "," << tm.grad_norm;
    else
      metrics << ",,";
    metrics << ",," << eps << "\n";

    if (steps >= next_eval) {
      do_eval();
      next_eval += cfg.test_interval;
    }
  }
  do_eval();

  summary.env_steps = steps;
  summary.episodes = episode;
  summary.best_eval_mean = best_eval;

  save_checkpoint(summary.checkpoint_path, learner.params(), cfg);
  write_episode_log(summary.episode_log_path, logged_episodes);
  {
    nlohmann::json js;
    js["name"] = cfg.name;
    js["seed"] = cfg.seed;
    js["env_steps"] = summary.env_steps;
    js["episodes"] = summary.episodes;
    js["final_eval_mean"] = summary.final_eval_mean;
    js["final_eval_std"] = summary.final_eval_std;
    js["best_eval_mean"] = summary.best_eval_mean;
    auto& evs = js["evals"] = nlohmann::json::array();
    for (const auto& e : summary.evals)
      evs.push_back({{"step", e.step}, {"mean", e.mean_return}, {"std", e.std_return}});
    std::ofstream f(fs::path(cfg.out_dir) / "summary.json");
    f << js.dump(2) << "\n";
  }
  return summary;
}

}  // namespace qcofr
