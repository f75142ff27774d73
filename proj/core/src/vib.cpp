#include "qcofr/vib.hpp"

#include <cmath>
#include <stdexcept>

namespace qcofr {

VibNet VibNet::create(ParamStore& store, const VibConfig& cfg, Rng& rng,
                      const std::string& prefix) {
  if (cfg.beta < 0.0) throw std::invalid_argument("vib: beta must be nonnegative");
  VibNet net;
  net.cfg = cfg;
  const auto add = [&](const char* name, Shape s) {
    const int idx = store.add(prefix + "." + name, s);
    init_uniform_fanin(store.at(idx), rng);
    return idx;
  };
  net.e_w1 = add("enc.w1", {cfg.hidden_width, cfg.latent});
  net.e_b1 = add("enc.b1", {1, cfg.latent});
  net.e_w2 = add("enc.w2", {cfg.latent, cfg.latent});
  net.e_b2 = add("enc.b2", {1, cfg.latent});
  net.d_w1 = add("dec.w1", {cfg.latent, cfg.latent});
  net.d_b1 = add("dec.b1", {1, cfg.latent});
  net.d_w2 = add("dec.w2", {cfg.latent, cfg.n_actions});
  net.d_b2 = add("dec.b2", {1, cfg.n_actions});
  return net;
}

namespace {

void linear_rows(const double* x, int rows, const Tensor& w, const Tensor& b, double* out) {
  kernels::matmul_nn(x, w.values.data(), out, rows, w.shape.rows, w.shape.cols, false);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < w.shape.cols; ++c)
      out[static_cast<std::size_t>(r) * w.shape.cols + c] += b.values[c];
}

}  // namespace

void vib_encode_mean(const ParamStore& store, const VibNet& net, const double* h, int rows,
                     double* mu, std::vector<double>& scratch) {
  const int mid = net.cfg.latent;
  scratch.resize(static_cast<std::size_t>(rows) * mid);
  linear_rows(h, rows, store.at(net.e_w1), store.at(net.e_b1), scratch.data());
  for (double& v : scratch) v = v > 0.0 ? v : 0.0;
  linear_rows(scratch.data(), rows, store.at(net.e_w2), store.at(net.e_b2), mu);
}

double kl_to_standard_normal(std::span<const double> mu) {
  double s = 0.0;
  for (double v : mu) s += v * v;
  return 0.5 * s;
}

AssistiveSample vib_encode(const ParamStore& store, const VibNet& net, std::span<const double> h,
                           std::span<const double> eps) {
  if (static_cast<int>(h.size()) != net.cfg.hidden_width)
    throw ShapeError("vib_encode: hidden width " + std::to_string(h.size()) + " != configured " +
                     std::to_string(net.cfg.hidden_width));
  if (eps.size() != static_cast<std::size_t>(net.cfg.latent))
    throw ShapeError("vib_encode: eps width " + std::to_string(eps.size()) + " != latent " +
                     std::to_string(net.cfg.latent));
  AssistiveSample out;
  out.mu.resize(net.cfg.latent);
  std::vector<double> scratch;
  vib_encode_mean(store, net, h.data(), 1, out.mu.data(), scratch);
  out.eps.assign(eps.begin(), eps.end());
  out.m.resize(net.cfg.latent);
  for (int i = 0; i < net.cfg.latent; ++i) out.m[i] = out.mu[i] + out.eps[i];
  return out;
}

double vib_loss(const ParamStore& store, const VibNet& net,
                const std::vector<std::vector<double>>& hidden_states,
                const std::vector<int>& target_actions,
                const std::vector<std::vector<double>>& eps_draws) {
  const std::size_t n = hidden_states.size();
  if (target_actions.size() != n || eps_draws.size() != n)
    throw std::invalid_argument("vib_loss: per-agent input counts differ");
  double ce = 0.0, kl = 0.0;
  std::vector<double> scratch, mid(net.cfg.latent), logits(net.cfg.n_actions);
  for (std::size_t i = 0; i < n; ++i) {
    const int u = target_actions[i];
    if (u < 0 || u >= net.cfg.n_actions)
      throw std::invalid_argument("vib_loss: invalid action id " + std::to_string(u));
    const AssistiveSample s = vib_encode(store, net, hidden_states[i], eps_draws[i]);
    kl += kl_to_standard_normal(s.mu);
    linear_rows(s.m.data(), 1, store.at(net.d_w1), store.at(net.d_b1), mid.data());
    for (double& v : mid) v = v > 0.0 ? v : 0.0;
    linear_rows(mid.data(), 1, store.at(net.d_w2), store.at(net.d_b2), logits.data());
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double p = std::max(std::exp(logits[u] - mx) / z, 1e-12);
    ce += -std::log(p);
  }
  return (ce + net.cfg.beta * kl) / static_cast<double>(n);
}

VibVars vib_leaves(Tape& tape, ParamStore& store, const VibNet& net) {
  VibVars v;
  v.e_w1 = tape.leaf(store.at(net.e_w1));
  v.e_b1 = tape.leaf(store.at(net.e_b1));
  v.e_w2 = tape.leaf(store.at(net.e_w2));
  v.e_b2 = tape.leaf(store.at(net.e_b2));
  v.d_w1 = tape.leaf(store.at(net.d_w1));
  v.d_b1 = tape.leaf(store.at(net.d_b1));
  v.d_w2 = tape.leaf(store.at(net.d_w2));
  v.d_b2 = tape.leaf(store.at(net.d_b2));
  return v;
}

Var vib_mu_tape(Tape& tape, const VibVars& v, Var h) {
  const Var mid = tape.relu(tape.add(tape.matmul(h, v.e_w1), v.e_b1));
  return tape.add(tape.matmul(mid, v.e_w2), v.e_b2);
}

Var vib_loss_rows_tape(Tape& tape, const VibVars& v, const VibConfig& cfg, Var m, Var mu,
                       Var target_onehot) {
  const Var mid = tape.relu(tape.add(tape.matmul(m, v.d_w1), v.d_b1));
  const Var logits = tape.add(tape.matmul(mid, v.d_w2), v.d_b2);
  const Var probs = tape.max_const(tape.softmax(logits), 1e-12);
  const Var ce = tape.neg(tape.row_sum(tape.mul(tape.log(probs), target_onehot)));
  const Var kl = tape.affine(tape.row_sum(tape.square(mu)), 0.5, 0.0);
  return tape.add(ce, tape.affine(kl, cfg.beta, 0.0));
}

}  // namespace qcofr
