#include "qcofr/agent.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace qcofr {

AgentNet AgentNet::create(ParamStore& store, const AgentNetConfig& cfg, Rng& rng,
                          const std::string& prefix) {
  AgentNet net;
  net.cfg = cfg;
  const int in = cfg.input_width, h = cfg.hidden, u = cfg.n_actions;
  const auto add = [&](const char* name, Shape s) {
    const int idx = store.add(prefix + "." + name, s);
    init_uniform_fanin(store.at(idx), rng);
    return idx;
  };
  net.w_embed = add("embed.w", {in, h});
  net.b_embed = add("embed.b", {1, h});
  net.w_z = add("gru.update.w", {h, h});
  net.u_z = add("gru.update.u", {h, h});
  net.b_z = add("gru.update.b", {1, h});
  net.w_r = add("gru.reset.w", {h, h});
  net.u_r = add("gru.reset.u", {h, h});
  net.b_r = add("gru.reset.b", {1, h});
  net.w_c = add("gru.cand.w", {h, h});
  net.u_c = add("gru.cand.u", {h, h});
  net.b_c = add("gru.cand.b", {1, h});
  net.w_out = add("head.w", {h, u});
  net.b_out = add("head.b", {1, u});
  return net;
}

namespace {

inline void linear_rows(const double* x, int rows, const Tensor& w, const Tensor& b, double* out) {
  kernels::matmul_nn(x, w.values.data(), out, rows, w.shape.rows, w.shape.cols, false);
  const int cols = w.shape.cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] += b.values[c];
}

}  // namespace

void agent_forward(const ParamStore& store, const AgentNet& net, const double* x, int rows,
                   const double* h_prev, double* q, double* h_next, AgentScratch& s) {
  const int h = net.cfg.hidden;
  const int u = net.cfg.n_actions;
  const std::size_t hn = static_cast<std::size_t>(rows) * h;
  s.e.resize(hn);
  s.z.resize(hn);
  s.r.resize(hn);
  s.c.resize(hn);
  s.tmp.resize(hn);

  // embedding
  linear_rows(x, rows, store.at(net.w_embed), store.at(net.b_embed), s.e.data());
  for (double& v : s.e) v = v > 0.0 ? v : 0.0;

  // update gate z = sigmoid(e*Wz + h*Uz + bz)
  linear_rows(s.e.data(), rows, store.at(net.w_z), store.at(net.b_z), s.z.data());
  kernels::matmul_nn(h_prev, store.at(net.u_z).values.data(), s.z.data(), rows, h, h, true);
  for (double& v : s.z) v = 1.0 / (1.0 + std::exp(-v));

  // reset gate
  linear_rows(s.e.data(), rows, store.at(net.w_r), store.at(net.b_r), s.r.data());
  kernels::matmul_nn(h_prev, store.at(net.u_r).values.data(), s.r.data(), rows, h, h, true);
  for (double& v : s.r) v = 1.0 / (1.0 + std::exp(-v));

  // candidate c = tanh(e*Wc + r .* (h*Uc) + bc)
  kernels::matmul_nn(h_prev, store.at(net.u_c).values.data(), s.tmp.data(), rows, h, h, false);
  linear_rows(s.e.data(), rows, store.at(net.w_c), store.at(net.b_c), s.c.data());
  for (std::size_t i = 0; i < hn; ++i) s.c[i] = std::tanh(s.c[i] + s.r[i] * s.tmp[i]);

  // h' = (1-z) .* c + z .* h
  for (int r0 = 0; r0 < rows; ++r0) {
    for (int j = 0; j < h; ++j) {
      const std::size_t i = static_cast<std::size_t>(r0) * h + j;
      h_next[i] = (1.0 - s.z[i]) * s.c[i] + s.z[i] * h_prev[i];
    }
  }

  linear_rows(h_next, rows, store.at(net.w_out), store.at(net.b_out), q);
  (void)u;
}

void agent_forward(const ParamStore& store, const AgentNet& net, std::span<const double> x,
                   std::span<const double> h_prev, std::span<double> q, std::span<double> h_next) {
  if (static_cast<int>(x.size()) != net.cfg.input_width)
    throw ShapeError("agent_forward: input width " + std::to_string(x.size()) + " != configured " +
                     std::to_string(net.cfg.input_width));
  if (static_cast<int>(h_prev.size()) != net.cfg.hidden)
    throw ShapeError("agent_forward: hidden width " + std::to_string(h_prev.size()) +
                     " != configured " + std::to_string(net.cfg.hidden));
  AgentScratch scratch;
  agent_forward(store, net, x.data(), 1, h_prev.data(), q.data(), h_next.data(), scratch);
}

AgentVars agent_leaves(Tape& tape, ParamStore& store, const AgentNet& net) {
  AgentVars v;
  v.w_embed = tape.leaf(store.at(net.w_embed));
  v.b_embed = tape.leaf(store.at(net.b_embed));
  v.w_z = tape.leaf(store.at(net.w_z));
  v.u_z = tape.leaf(store.at(net.u_z));
  v.b_z = tape.leaf(store.at(net.b_z));
  v.w_r = tape.leaf(store.at(net.w_r));
  v.u_r = tape.leaf(store.at(net.u_r));
  v.b_r = tape.leaf(store.at(net.b_r));
  v.w_c = tape.leaf(store.at(net.w_c));
  v.u_c = tape.leaf(store.at(net.u_c));
  v.b_c = tape.leaf(store.at(net.b_c));
  v.w_out = tape.leaf(store.at(net.w_out));
  v.b_out = tape.leaf(store.at(net.b_out));
  return v;
}

AgentStepVars agent_forward_tape(Tape& tape, const AgentVars& v, Var x, Var h_prev) {
  const Var e = tape.relu(tape.add(tape.matmul(x, v.w_embed), v.b_embed));
  const Var z =
      tape.sigmoid(tape.add(tape.add(tape.matmul(e, v.w_z), tape.matmul(h_prev, v.u_z)), v.b_z));
  const Var r =
      tape.sigmoid(tape.add(tape.add(tape.matmul(e, v.w_r), tape.matmul(h_prev, v.u_r)), v.b_r));
  const Var c = tape.tanh(
      tape.add(tape.add(tape.matmul(e, v.w_c), tape.mul(r, tape.matmul(h_prev, v.u_c))), v.b_c));
  // h' = (1-z) .* c + z .* h
  const Var h = tape.add(tape.mul(tape.affine(z, -1.0, 1.0), c), tape.mul(z, h_prev));
  const Var q = tape.add(tape.matmul(h, v.w_out), v.b_out);
  return {q, h};
}

std::vector<double> build_agent_input(std::span<const double> obs, int last_action, int n_actions,
                                      int agent_id, int n_agents, bool id_onehot) {
  std::vector<double> x;
  x.reserve(obs.size() + static_cast<std::size_t>(n_actions) + (id_onehot ? n_agents : 0));
  x.insert(x.end(), obs.begin(), obs.end());
  for (int a = 0; a < n_actions; ++a) x.push_back(a == last_action ? 1.0 : 0.0);
  if (id_onehot)
    for (int i = 0; i < n_agents; ++i) x.push_back(i == agent_id ? 1.0 : 0.0);
  return x;
}

int greedy_action(std::span<const double> q, std::span<const std::uint8_t> avail) {
  int best = -1;
  double best_v = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!avail.empty() && !avail[a]) continue;
    if (best < 0 || q[a] > best_v) {
      best = static_cast<int>(a);
      best_v = q[a];
    }
  }
  if (best < 0) throw std::invalid_argument("greedy_action: no available action");
  return best;
}

int select_action(std::span<const double> q, double epsilon, std::span<const std::uint8_t> avail,
                  Rng& rng) {
  int n_avail = 0;
  for (std::size_t a = 0; a < q.size(); ++a)
    if (avail.empty() || avail[a]) ++n_avail;
  if (n_avail == 0) throw std::invalid_argument("select_action: no available action");
  if (rng.uniform() < epsilon) {
    int pick = rng.index(n_avail);
    for (std::size_t a = 0; a < q.size(); ++a) {
      if (!avail.empty() && !avail[a]) continue;
      if (pick-- == 0) return static_cast<int>(a);
    }
  }
  return greedy_action(q, avail);
}

}  // namespace qcofr
