#pragma once

#include <span>
#include <vector>

#include "qcofr/nn.hpp"
#include "qcofr/rng.hpp"
#include "qcofr/tape.hpp"

namespace qcofr {

// Recurrent utility network: ReLU input embedding, single GRU cell, linear
// action-value head. One shared instance serves every agent; the caller
// appends an agent-id one-hot to the observation when identification is
// wanted (see build_agent_input).
struct AgentNetConfig {
  int input_width = 0;  // observation (+ last-action one-hot [+ agent id])
  int n_actions = 0;
  int hidden = 64;
};

struct AgentNet {
  AgentNetConfig cfg;
  int w_embed = -1, b_embed = -1;
  int w_z = -1, u_z = -1, b_z = -1;  // update gate
  int w_r = -1, u_r = -1, b_r = -1;  // reset gate
  int w_c = -1, u_c = -1, b_c = -1;  // candidate
  int w_out = -1, b_out = -1;

  static AgentNet create(ParamStore& store, const AgentNetConfig& cfg, Rng& rng,
                         const std::string& prefix = "agent");
};

struct AgentScratch {
  std::vector<double> e, z, r, c, tmp;
};

// Batched plain forward: x is rows x input_width, h_prev rows x H. Writes q
// (rows x U) and h_next (rows x H). h_next entries stay in (-1, 1).
void agent_forward(const ParamStore& store, const AgentNet& net, const double* x, int rows,
                   const double* h_prev, double* q, double* h_next, AgentScratch& scratch);

// Single-step convenience over spans (one row).
void agent_forward(const ParamStore& store, const AgentNet& net, std::span<const double> x,
                   std::span<const double> h_prev, std::span<double> q, std::span<double> h_next);

// Tape twin. Leaves are created once per tape via agent_leaves.
struct AgentVars {
  Var w_embed, b_embed, w_z, u_z, b_z, w_r, u_r, b_r, w_c, u_c, b_c, w_out, b_out;
};
AgentVars agent_leaves(Tape& tape, ParamStore& store, const AgentNet& net);

struct AgentStepVars {
  Var q, h;
};
AgentStepVars agent_forward_tape(Tape& tape, const AgentVars& vars, Var x, Var h_prev);

// Observation (+ one-hot of last action, all-zero at episode start) and
// optionally a one-hot agent id.
std::vector<double> build_agent_input(std::span<const double> obs, int last_action, int n_actions,
                                      int agent_id, int n_agents, bool id_onehot);

// Epsilon-greedy over available actions; greedy ties break to the lowest
// index. Throws if no action is available.
int select_action(std::span<const double> q, double epsilon, std::span<const std::uint8_t> avail,
                  Rng& rng);
int greedy_action(std::span<const double> q, std::span<const std::uint8_t> avail);

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  long long anneal_steps = 50000;

  double at(long long step) const {
    if (step >= anneal_steps) return end;
    return start + (end - start) * static_cast<double>(step) / static_cast<double>(anneal_steps);
  }
};

}  // namespace qcofr
