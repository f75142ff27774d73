#pragma once

#include <span>
#include <vector>

#include "qcofr/nn.hpp"
#include "qcofr/tape.hpp"

namespace qcofr {

// Assistive-information generator: a Gaussian encoder with identity
// covariance over agent hidden states plus an action decoder. The latent is
// m = mu + eps with eps ~ N(0, I) during training and m = mu at evaluation.
struct VibConfig {
  int hidden_width = 64;  // agent GRU width H
  int latent = 32;        // M
  int n_actions = 0;
  double beta = 1e-3;
};

struct VibNet {
  VibConfig cfg;
  int e_w1 = -1, e_b1 = -1, e_w2 = -1, e_b2 = -1;  // encoder: H -> M -> M
  int d_w1 = -1, d_b1 = -1, d_w2 = -1, d_b2 = -1;  // decoder: M -> M -> |U|

  static VibNet create(ParamStore& store, const VibConfig& cfg, Rng& rng,
                       const std::string& prefix = "vib");
};

// Plain encoder: rows x H -> rows x M (the mean mu).
void vib_encode_mean(const ParamStore& store, const VibNet& net, const double* h, int rows,
                     double* mu, std::vector<double>& scratch);

// Closed form KL(N(mu, I) || N(0, I)) = ||mu||^2 / 2.
double kl_to_standard_normal(std::span<const double> mu);

struct AssistiveSample {
  std::vector<double> mu;
  std::vector<double> eps;
  std::vector<double> m;  // mu + eps
};

// Single hidden state -> reparameterized sample. Deterministic given (h, eps).
AssistiveSample vib_encode(const ParamStore& store, const VibNet& net, std::span<const double> h,
                           std::span<const double> eps);

// Full Eq.-style variational loss over n agents (plain evaluation, used by
// tests and verification): mean_i [ -log q(u*_i | m_i) ] + beta * mean_i KL_i.
// Decoder probabilities are clamped below at 1e-12 before the log.
double vib_loss(const ParamStore& store, const VibNet& net,
                const std::vector<std::vector<double>>& hidden_states,
                const std::vector<int>& target_actions,
                const std::vector<std::vector<double>>& eps_draws);

// Tape twins.
struct VibVars {
  Var e_w1, e_b1, e_w2, e_b2, d_w1, d_b1, d_w2, d_b2;
};
VibVars vib_leaves(Tape& tape, ParamStore& store, const VibNet& net);

Var vib_mu_tape(Tape& tape, const VibVars& v, Var h);

// Per-row loss vector (rows x 1): cross-entropy of target actions under the
// decoder applied to m, plus beta times the per-row KL computed from mu.
Var vib_loss_rows_tape(Tape& tape, const VibVars& v, const VibConfig& cfg, Var m, Var mu,
                       Var target_onehot);

}  // namespace qcofr
