#include "qcofr/mixer.hpp"

#include <cmath>
#include <stdexcept>

namespace qcofr {

MixerVariant mixer_variant_from_string(const std::string& s) {
  if (s == "cfn") return MixerVariant::kCfn;
  if (s == "cfn-c") return MixerVariant::kCfnC;
  if (s == "cfn-d") return MixerVariant::kCfnD;
  if (s == "vdn") return MixerVariant::kVdn;
  throw std::invalid_argument("unknown mixer variant '" + s + "' (cfn|cfn-c|cfn-d|vdn)");
}

std::string to_string(MixerVariant v) {
  switch (v) {
    case MixerVariant::kCfn: return "cfn";
    case MixerVariant::kCfnC: return "cfn-c";
    case MixerVariant::kCfnD: return "cfn-d";
    case MixerVariant::kVdn: return "vdn";
  }
  return "?";
}

MixerNet MixerNet::create(ParamStore& store, const MixerConfig& cfg, Rng& rng,
                          const std::string& prefix) {
  if (cfg.delta <= 0.0) throw std::invalid_argument("mixer: delta must be positive");
  if (cfg.depth < 1 || cfg.ladders < 1) throw std::invalid_argument("mixer: l, d must be >= 1");
  MixerNet net;
  net.cfg = cfg;
  if (cfg.variant == MixerVariant::kVdn) return net;  // parameterless baseline

  const auto add = [&](const std::string& name, Shape s, double stddev) {
    const int idx = store.add(prefix + "." + name, s);
    init_normal(store.at(idx), stddev, rng);
    return idx;
  };

  const bool full = cfg.variant == MixerVariant::kCfn || cfg.variant == MixerVariant::kCfnC;
  const bool single = cfg.variant == MixerVariant::kCfnC || cfg.variant == MixerVariant::kCfnD;

  if (full) {
    net.ladder_w.resize(cfg.ladders);
    for (int k = 0; k < cfg.ladders; ++k)
      for (int j = 0; j < cfg.depth; ++j)
        net.ladder_w[k].push_back(add("ladder" + std::to_string(k) + ".w" + std::to_string(j),
                                      {cfg.n_agents, 1}, 0.1));
    net.head_wm.resize(cfg.ladders);
    net.head_ws.resize(cfg.ladders);
    for (int k = 0; k < cfg.ladders; ++k) {
      const int wm = store.add(prefix + ".head" + std::to_string(k) + ".wm",
                               {cfg.latent, cfg.key_width});
      init_uniform_fanin(store.at(wm), rng);
      net.head_wm[k] = wm;
      const int ws = store.add(prefix + ".head" + std::to_string(k) + ".ws",
                               {cfg.state_width, cfg.key_width});
      init_uniform_fanin(store.at(ws), rng);
      net.head_ws[k] = ws;
    }
  }
  if (single) {
    net.single_w.resize(cfg.n_agents);
    for (int i = 0; i < cfg.n_agents; ++i)
      for (int j = 0; j < cfg.single_depth; ++j)
        net.single_w[i].push_back(
            add("single" + std::to_string(i) + ".w" + std::to_string(j), {1, 1}, 0.1));
  }
  return net;
}

std::vector<double> enforce_igm(std::span<const double> raw, bool igm_mode) {
  std::vector<double> out(raw.begin(), raw.end());
  if (igm_mode)
    for (double& v : out) v = std::fabs(v);
  return out;
}

double ladder_forward(std::span<const double> q, const std::vector<std::vector<double>>& layers,
                      double delta) {
  if (delta <= 0.0) throw std::invalid_argument("ladder_forward: delta must be positive");
  const int d = static_cast<int>(layers.size());
  double t = 0.0;
  for (int k = d - 1; k >= 0; --k) {
    if (layers[k].size() != q.size())
      throw ShapeError("ladder_forward: layer width " + std::to_string(layers[k].size()) +
                       " != utility width " + std::to_string(q.size()));
    double z = k == d - 1 ? 0.0 : t;
    for (std::size_t i = 0; i < q.size(); ++i) z += layers[k][i] * q[i];
    t = 1.0 / std::max(std::fabs(z), delta);
  }
  return t;
}

std::vector<double> credits(std::span<const double> m, std::span<const double> s,
                            const std::vector<std::vector<double>>& wm,
                            const std::vector<std::vector<double>>& ws, int key_width) {
  const int l = static_cast<int>(wm.size());
  if (l < 1 || ws.size() != wm.size())
    throw std::invalid_argument("credits: need one (wm, ws) pair per ladder");
  std::vector<double> logits(l);
  std::vector<double> km(key_width), ks(key_width);
  for (int k = 0; k < l; ++k) {
    if (wm[k].size() != m.size() * key_width || ws[k].size() != s.size() * key_width)
      throw ShapeError("credits: head " + std::to_string(k) + " width mismatch");
    kernels::matmul_nn(m.data(), wm[k].data(), km.data(), 1, static_cast<int>(m.size()),
                       key_width, false);
    kernels::matmul_nn(s.data(), ws[k].data(), ks.data(), 1, static_cast<int>(s.size()),
                       key_width, false);
    double dot = 0.0;
    for (int j = 0; j < key_width; ++j) dot += km[j] * std::max(ks[j], 0.0);
    logits[k] = dot;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  std::vector<double> alpha(l);
  for (int k = 0; k < l; ++k) {
    alpha[k] = std::exp(logits[k] - mx);
    z += alpha[k];
  }
  for (double& a : alpha) a /= z;
  return alpha;
}

namespace {

// One ladder layer over a batch: z = Q * w (+ t_prev), t = 1/max(|z|, delta).
void ladder_rows(const double* q, int rows, int n, const double* w, bool igm, const double* t_prev,
                 double delta, double* t_out, std::vector<double>& z) {
  z.resize(rows);
  for (int r = 0; r < rows; ++r) {
    double acc = t_prev ? t_prev[r] : 0.0;
    const double* qr = q + static_cast<std::size_t>(r) * n;
    for (int i = 0; i < n; ++i) acc += (igm ? std::fabs(w[i]) : w[i]) * qr[i];
    t_out[r] = 1.0 / std::max(std::fabs(acc), delta);
  }
}

}  // namespace

void mixer_forward(const ParamStore& store, const MixerNet& net, const double* q, const double* m,
                   const double* s, int rows, double* qtot, MixerScratch& sc) {
  const MixerConfig& cfg = net.cfg;
  const int n = cfg.n_agents;

  if (cfg.variant == MixerVariant::kVdn) {
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += q[static_cast<std::size_t>(r) * n + i];
      qtot[r] = acc;
    }
    return;
  }

  for (int r = 0; r < rows; ++r) qtot[r] = 0.0;

  const bool full = cfg.variant == MixerVariant::kCfn || cfg.variant == MixerVariant::kCfnC;
  const bool single = cfg.variant == MixerVariant::kCfnC || cfg.variant == MixerVariant::kCfnD;

  if (full) {
    const int l = cfg.ladders;
    sc.logits.resize(static_cast<std::size_t>(rows) * l);
    sc.key_m.resize(static_cast<std::size_t>(rows) * cfg.key_width);
    sc.key_s.resize(static_cast<std::size_t>(rows) * cfg.key_width);
    sc.t.resize(rows);
    sc.alpha.resize(static_cast<std::size_t>(rows) * l);

    // credit logits
    for (int k = 0; k < l; ++k) {
      const Tensor& wm = store.at(net.head_wm[k]);
      const Tensor& ws = store.at(net.head_ws[k]);
      kernels::matmul_nn(m, wm.values.data(), sc.key_m.data(), rows, cfg.latent, cfg.key_width,
                         false);
      kernels::matmul_nn(s, ws.values.data(), sc.key_s.data(), rows, cfg.state_width,
                         cfg.key_width, false);
      for (int r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (int j = 0; j < cfg.key_width; ++j) {
          const double key = sc.key_s[static_cast<std::size_t>(r) * cfg.key_width + j];
          dot += sc.key_m[static_cast<std::size_t>(r) * cfg.key_width + j] * (key > 0.0 ? key : 0.0);
        }
        sc.logits[static_cast<std::size_t>(r) * l + k] = dot;
      }
    }
    // softmax over ladders
    for (int r = 0; r < rows; ++r) {
      const double* lr = sc.logits.data() + static_cast<std::size_t>(r) * l;
      double* ar = sc.alpha.data() + static_cast<std::size_t>(r) * l;
      double mx = lr[0];
      for (int k = 1; k < l; ++k) mx = std::max(mx, lr[k]);
      double zsum = 0.0;
      for (int k = 0; k < l; ++k) {
        ar[k] = std::exp(lr[k] - mx);
        zsum += ar[k];
      }
      for (int k = 0; k < l; ++k) ar[k] /= zsum;
    }
    // ladders
    for (int k = 0; k < l; ++k) {
      const double* t_prev = nullptr;
      for (int j = cfg.depth - 1; j >= 0; --j) {
        const Tensor& w = store.at(net.ladder_w[k][j]);
        ladder_rows(q, rows, n, w.values.data(), cfg.igm, t_prev, cfg.delta, sc.t.data(), sc.z);
        t_prev = sc.t.data();
      }
      for (int r = 0; r < rows; ++r)
        qtot[r] += sc.alpha[static_cast<std::size_t>(r) * l + k] * sc.t[r];
    }
  }

  if (single) {
    sc.t.resize(rows);
    std::vector<double> qi(rows);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < rows; ++r) qi[r] = q[static_cast<std::size_t>(r) * n + i];
      const double* t_prev = nullptr;
      for (int j = cfg.single_depth - 1; j >= 0; --j) {
        const Tensor& w = store.at(net.single_w[i][j]);
        ladder_rows(qi.data(), rows, 1, w.values.data(), cfg.igm, t_prev, cfg.delta, sc.t.data(),
                    sc.z);
        t_prev = sc.t.data();
      }
      for (int r = 0; r < rows; ++r) qtot[r] += sc.t[r];
    }
  }
}

MixerVars mixer_leaves(Tape& tape, ParamStore& store, const MixerNet& net) {
  MixerVars v;
  v.ladder_w.resize(net.ladder_w.size());
  for (std::size_t k = 0; k < net.ladder_w.size(); ++k)
    for (int idx : net.ladder_w[k]) v.ladder_w[k].push_back(tape.leaf(store.at(idx)));
  v.single_w.resize(net.single_w.size());
  for (std::size_t i = 0; i < net.single_w.size(); ++i)
    for (int idx : net.single_w[i]) v.single_w[i].push_back(tape.leaf(store.at(idx)));
  for (int idx : net.head_wm) v.head_wm.push_back(tape.leaf(store.at(idx)));
  for (int idx : net.head_ws) v.head_ws.push_back(tape.leaf(store.at(idx)));
  return v;
}

namespace {

Var ladder_tape(Tape& tape, const MixerConfig& cfg, Var q_cols,
                const std::vector<Var>& layer_weights) {
  Var t;
  const int d = static_cast<int>(layer_weights.size());
  for (int j = d - 1; j >= 0; --j) {
    Var w = layer_weights[j];
    if (cfg.igm) w = tape.abs(w);
    Var z = tape.matmul(q_cols, w);
    if (j < d - 1) z = tape.add(z, t);
    t = tape.reciprocal(tape.max_const(tape.abs(z), cfg.delta));
  }
  return t;
}

}  // namespace

Var mixer_forward_tape(Tape& tape, const MixerVars& vars, const MixerConfig& cfg, Var q, Var m,
                       Var s) {
  const int n = cfg.n_agents;
  if (tape.shape(q).cols != n)
    throw ShapeError("mixer: utility width " + tape.shape(q).str() + " != n_agents " +
                     std::to_string(n));

  if (cfg.variant == MixerVariant::kVdn) return tape.row_sum(q);

  const bool full = cfg.variant == MixerVariant::kCfn || cfg.variant == MixerVariant::kCfnC;
  const bool single = cfg.variant == MixerVariant::kCfnC || cfg.variant == MixerVariant::kCfnD;

  Var total;
  if (full) {
    const int l = cfg.ladders;
    std::vector<Var> logit_cols(l), ladder_cols(l);
    for (int k = 0; k < l; ++k) {
      const Var km = tape.matmul(m, vars.head_wm[k]);
      const Var ks = tape.relu(tape.matmul(s, vars.head_ws[k]));
      logit_cols[k] = tape.row_sum(tape.mul(km, ks));
      ladder_cols[k] = ladder_tape(tape, cfg, q, vars.ladder_w[k]);
    }
    const Var alpha = tape.softmax(tape.concat_cols(logit_cols));
    const Var ladders = tape.concat_cols(ladder_cols);
    total = tape.row_sum(tape.mul(alpha, ladders));
  }
  if (single) {
    for (int i = 0; i < n; ++i) {
      const Var qi = tape.col_slice(q, i, 1);
      const Var t = ladder_tape(tape, cfg, qi, vars.single_w[i]);
      total = total.valid() ? tape.add(total, t) : t;
    }
  }
  return total;
}

}  // namespace qcofr
