#pragma once

#include <span>
#include <string>
#include <vector>

#include "qcofr/nn.hpp"
#include "qcofr/tape.hpp"

namespace qcofr {

enum class MixerVariant { kCfn, kCfnC, kCfnD, kVdn };

MixerVariant mixer_variant_from_string(const std::string& s);
std::string to_string(MixerVariant v);

struct MixerConfig {
  int n_agents = 0;
  int ladders = 4;       // l, full-input ladders
  int depth = 2;         // d
  int single_depth = 2;  // depth of single-feature ladders (CFN-C / CFN-D)
  double delta = 0.01;   // pole floor
  MixerVariant variant = MixerVariant::kCfn;
  bool igm = true;       // effective ladder weights = |raw|
  int key_width = 32;    // credit-head key width
  int latent = 32;       // width of the assistive vector m
  int state_width = 0;
};

// Continued-fraction mixing network. Full-input ladders evaluate
//   t_d = 1/max(|w_d.Q|, delta),  t_k = 1/max(|w_k.Q + t_{k+1}|, delta)
// and are combined with softmax credits computed from (m, s). CFN-C adds n
// single-feature ladders (one per agent utility, unweighted); CFN-D keeps
// only those. The VDN variant is the plain sum used as a comparison baseline.
struct MixerNet {
  MixerConfig cfg;
  std::vector<std::vector<int>> ladder_w;  // [ladder][layer] -> (n x 1)
  std::vector<std::vector<int>> single_w;  // [agent][layer] -> (1 x 1)
  std::vector<int> head_wm;                // per ladder: (latent x key)
  std::vector<int> head_ws;                // per ladder: (state x key)

  static MixerNet create(ParamStore& store, const MixerConfig& cfg, Rng& rng,
                         const std::string& prefix = "mixer");
};

// Spec-level primitives -----------------------------------------------------

// IGM weight transform: |raw| elementwise when igm is on, identity otherwise.
std::vector<double> enforce_igm(std::span<const double> raw, bool igm_mode);

// One ladder over the utility vector; layers.size() is the depth, each layer
// holds one weight per utility. Output lies in (0, 1/delta].
double ladder_forward(std::span<const double> q, const std::vector<std::vector<double>>& layers,
                      double delta);

// Softmax credits over ladders from the pooled assistive vector m and state s.
std::vector<double> credits(std::span<const double> m, std::span<const double> s,
                            const std::vector<std::vector<double>>& wm,
                            const std::vector<std::vector<double>>& ws, int key_width);

// Network evaluation --------------------------------------------------------

struct MixerScratch {
  std::vector<double> t, z, key_m, key_s, logits, alpha;
};

// Plain batched evaluation: q (rows x n), m (rows x latent), s (rows x S);
// writes rows values of Q_tot.
void mixer_forward(const ParamStore& store, const MixerNet& net, const double* q, const double* m,
                   const double* s, int rows, double* qtot, MixerScratch& scratch);

struct MixerVars {
  std::vector<std::vector<Var>> ladder_w;
  std::vector<std::vector<Var>> single_w;
  std::vector<Var> head_wm, head_ws;
};
MixerVars mixer_leaves(Tape& tape, ParamStore& store, const MixerNet& net);

// Tape twin; returns Q_tot as (rows x 1).
Var mixer_forward_tape(Tape& tape, const MixerVars& vars, const MixerConfig& cfg, Var q, Var m,
                       Var s);

}  // namespace qcofr
