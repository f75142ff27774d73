#include <cmath>

#include "doctest.h"
#include "qcofr/agent.hpp"

using namespace qcofr;

namespace {

AgentNet zero_net(ParamStore& store, int in, int actions, int hidden) {
  Rng rng(1);
  AgentNet net = AgentNet::create(store, {in, actions, hidden}, rng);
  for (int i = 0; i < store.size(); ++i)
    for (double& v : store.at(i).values) v = 0.0;
  return net;
}

}  // namespace

TEST_CASE("all-zero parameters give zero q-values and zero next hidden") {
  ParamStore store;
  const AgentNet net = zero_net(store, 5, 3, 4);
  std::vector<double> x(5, 0.7), h(4, 0.0), q(3), hn(4);
  agent_forward(store, net, x, h, q, hn);
  for (double v : q) CHECK(v == 0.0);
  for (double v : hn) CHECK(v == 0.0);
}

TEST_CASE("forward is bitwise deterministic") {
  ParamStore store;
  Rng rng(42);
  const AgentNet net = AgentNet::create(store, {6, 4, 8}, rng);
  std::vector<double> x(6), h(8), q1(4), q2(4), h1(8), h2(8);
  for (double& v : x) v = rng.gauss();
  for (double& v : h) v = 0.3 * rng.gauss();
  agent_forward(store, net, x, h, q1, h1);
  agent_forward(store, net, x, h, q2, h2);
  CHECK(q1 == q2);
  CHECK(h1 == h2);
}

TEST_CASE("width-2 GRU cell matches a hand evaluation") {
  // Independent straight-line evaluation of the gate equations on a cell
  // small enough to follow by hand.
  ParamStore store;
  Rng rng(5);
  const AgentNet net = AgentNet::create(store, {2, 2, 2}, rng);
  std::vector<double> x = {0.4, -0.9};
  std::vector<double> h = {0.2, -0.5};

  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };

  std::vector<double> e(2), z(2), r(2), c(2), expect_h(2), expect_q(2);
  for (int j = 0; j < 2; ++j) {
    double s = store.at(net.b_embed).values[static_cast<std::size_t>(j)];
    for (int i = 0; i < 2; ++i)
      s += x[static_cast<std::size_t>(i)] * store.at(net.w_embed).values[static_cast<std::size_t>(i) * 2 + j];
    e[static_cast<std::size_t>(j)] = std::max(0.0, s);
  }
  const auto gate = [&](int wi, int ui, int bi, int j, const std::vector<double>& hh) {
    double s = store.at(bi).values[static_cast<std::size_t>(j)];
    const Tensor& wt = store.at(wi);
    const Tensor& ut = store.at(ui);
    for (int i = 0; i < 2; ++i) {
      s += e[static_cast<std::size_t>(i)] * wt.values[static_cast<std::size_t>(i) * 2 + j];
      s += hh[static_cast<std::size_t>(i)] * ut.values[static_cast<std::size_t>(i) * 2 + j];
    }
    return s;
  };
  for (int j = 0; j < 2; ++j) z[static_cast<std::size_t>(j)] = sig(gate(net.w_z, net.u_z, net.b_z, j, h));
  for (int j = 0; j < 2; ++j) r[static_cast<std::size_t>(j)] = sig(gate(net.w_r, net.u_r, net.b_r, j, h));
  for (int j = 0; j < 2; ++j) {
    double s = store.at(net.b_c).values[static_cast<std::size_t>(j)];
    for (int i = 0; i < 2; ++i) {
      s += e[static_cast<std::size_t>(i)] * store.at(net.w_c).values[static_cast<std::size_t>(i) * 2 + j];
    }
    double rec = 0.0;
    for (int i = 0; i < 2; ++i)
      rec += h[static_cast<std::size_t>(i)] * store.at(net.u_c).values[static_cast<std::size_t>(i) * 2 + j];
    c[static_cast<std::size_t>(j)] = std::tanh(s + r[static_cast<std::size_t>(j)] * rec);
  }
  for (int j = 0; j < 2; ++j)
    expect_h[static_cast<std::size_t>(j)] =
        (1.0 - z[static_cast<std::size_t>(j)]) * c[static_cast<std::size_t>(j)] +
        z[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)];
  for (int j = 0; j < 2; ++j) {
    double s = store.at(net.b_out).values[static_cast<std::size_t>(j)];
    for (int i = 0; i < 2; ++i)
      s += expect_h[static_cast<std::size_t>(i)] * store.at(net.w_out).values[static_cast<std::size_t>(i) * 2 + j];
    expect_q[static_cast<std::size_t>(j)] = s;
  }

  std::vector<double> q(2), hn(2);
  agent_forward(store, net, x, h, q, hn);
  for (int j = 0; j < 2; ++j) {
    CHECK(hn[static_cast<std::size_t>(j)] == doctest::Approx(expect_h[static_cast<std::size_t>(j)]).epsilon(1e-12));
    CHECK(q[static_cast<std::size_t>(j)] == doctest::Approx(expect_q[static_cast<std::size_t>(j)]).epsilon(1e-12));
  }

  // Same inputs, different history -> different q in general.
  std::vector<double> h2 = {-0.6, 0.4}, q2(2), hn2(2);
  agent_forward(store, net, x, h2, q2, hn2);
  CHECK(q[0] != q2[0]);
}

TEST_CASE("hidden state stays inside (-1, 1)") {
  ParamStore store;
  Rng rng(9);
  const AgentNet net = AgentNet::create(store, {4, 3, 6}, rng);
  std::vector<double> h(6, 0.0), q(3), hn(6), x(4);
  for (int t = 0; t < 200; ++t) {
    for (double& v : x) v = 3.0 * rng.gauss();
    agent_forward(store, net, x, h, q, hn);
    h = hn;
    for (double v : h) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("tape forward equals plain forward") {
  ParamStore store;
  Rng rng(13);
  const AgentNet net = AgentNet::create(store, {5, 4, 8}, rng);
  std::vector<double> x(10), h0(16, 0.0);
  for (double& v : x) v = rng.gauss();

  std::vector<double> q_plain(8), h_plain(16);
  AgentScratch scratch;
  agent_forward(store, net, x.data(), 2, h0.data(), q_plain.data(), h_plain.data(), scratch);

  Tape tape;
  const AgentVars vars = agent_leaves(tape, store, net);
  const auto step = agent_forward_tape(tape, vars, tape.constant({2, 5}, x),
                                       tape.constant({2, 8}, h0));
  const auto qv = tape.value(step.q);
  const auto hv = tape.value(step.h);
  for (int i = 0; i < 8; ++i) CHECK(qv[static_cast<std::size_t>(i)] == doctest::Approx(q_plain[static_cast<std::size_t>(i)]).epsilon(1e-12));
  for (int i = 0; i < 16; ++i) CHECK(hv[static_cast<std::size_t>(i)] == doctest::Approx(h_plain[static_cast<std::size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("unrolled gradients match finite differences through time") {
  ParamStore store;
  Rng rng(17);
  const AgentNet net = AgentNet::create(store, {3, 2, 4}, rng);
  std::vector<std::vector<double>> xs;
  for (int t = 0; t < 4; ++t) {
    std::vector<double> x(3);
    for (double& v : x) v = rng.gauss();
    xs.push_back(x);
  }
  std::vector<Tensor*> leaves;
  for (int i = 0; i < store.size(); ++i) leaves.push_back(&store.at(i));

  const auto build = [&](Tape& t) -> Var {
    const AgentVars vars = agent_leaves(t, store, net);
    Var h = t.zeros({1, 4});
    Var loss;
    for (const auto& x : xs) {
      const auto step = agent_forward_tape(t, vars, t.constant({1, 3}, x), h);
      h = step.h;
      const Var l = t.sum(t.square(step.q));
      loss = loss.valid() ? t.add(loss, l) : l;
    }
    return loss;
  };
  const auto rep = grad_check(build, leaves, 1e-5, 1e-4);
  CHECK(rep.ok);
}

TEST_CASE("input builder and id permutation symmetry") {
  ParamStore store;
  Rng rng(23);
  const int obs_w = 4, n_actions = 3, n_agents = 2, hidden = 6;
  const AgentNet net =
      AgentNet::create(store, {obs_w + n_actions + n_agents, n_actions, hidden}, rng);
  std::vector<double> obs(4, 0.25), h(hidden, 0.0);

  const auto x0 = build_agent_input(obs, 1, n_actions, 0, n_agents, true);
  const auto x1 = build_agent_input(obs, 1, n_actions, 1, n_agents, true);
  CHECK(x0.size() == static_cast<std::size_t>(obs_w + n_actions + n_agents));
  CHECK(x0[static_cast<std::size_t>(obs_w) + 1] == 1.0);  // chosen action one-hot

  std::vector<double> q0(3), q1(3), hn(hidden);
  agent_forward(store, net, x0, h, q0, hn);
  agent_forward(store, net, x1, h, q1, hn);
  // Swapping the id slots swaps the outputs.
  std::vector<double> q0r(3), q1r(3);
  agent_forward(store, net, x1, h, q0r, hn);
  agent_forward(store, net, x0, h, q1r, hn);
  CHECK(q0 == q1r);
  CHECK(q1 == q0r);

  const auto none = build_agent_input(obs, -1, n_actions, 0, n_agents, true);
  for (int a = 0; a < n_actions; ++a) CHECK(none[static_cast<std::size_t>(obs_w) + a] == 0.0);
}

TEST_CASE("width mismatch raises") {
  ParamStore store;
  Rng rng(1);
  const AgentNet net = AgentNet::create(store, {4, 2, 4}, rng);
  std::vector<double> x(3), h(4), q(2), hn(4);
  CHECK_THROWS_AS(
      agent_forward(store, net, std::span<const double>(x), std::span<const double>(h),
                    std::span<double>(q), std::span<double>(hn)),
      ShapeError);
}

TEST_CASE("select_action: greedy, ties, exploration, masking") {
  Rng rng(31);
  const std::vector<double> q = {1.0, 3.0, 2.0};
  const std::vector<std::uint8_t> all(3, 1);
  CHECK(select_action(q, 0.0, all, rng) == 1);

  const std::vector<double> tie = {5.0, 5.0};
  const std::vector<std::uint8_t> both(2, 1);
  CHECK(select_action(tie, 0.0, both, rng) == 0);

  const std::vector<std::uint8_t> masked = {1, 0, 1};
  CHECK(select_action(q, 0.0, masked, rng) == 2);

  const std::vector<std::uint8_t> none(3, 0);
  CHECK_THROWS_AS(select_action(q, 0.0, none, rng), std::invalid_argument);

  int counts[3] = {0, 0, 0};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[select_action(q, 1.0, all, rng)];
  const double sigma = std::sqrt((1.0 / 3) * (2.0 / 3) / draws);
  for (int a = 0; a < 3; ++a)
    CHECK(std::fabs(counts[a] / static_cast<double>(draws) - 1.0 / 3) < 3 * sigma);
}

TEST_CASE("epsilon schedule endpoints and midpoint") {
  const EpsilonSchedule s{1.0, 0.05, 50000};
  CHECK(s.at(0) == 1.0);
  CHECK(s.at(50000) == 0.05);
  CHECK(s.at(123456) == 0.05);
  CHECK(s.at(25000) == doctest::Approx(0.525));
}
