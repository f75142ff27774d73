#include <cmath>

#include "doctest.h"
#include "qcofr/mixer.hpp"

using namespace qcofr;

namespace {

// Straight-line reference: per-ladder continued fraction, softmax credits,
// weighted sum. Written independently of the network code path.
double reference_mix(const std::vector<double>& q, const std::vector<double>& m,
                     const std::vector<double>& s,
                     const std::vector<std::vector<std::vector<double>>>& raw_ladders,
                     const std::vector<std::vector<double>>& wm,
                     const std::vector<std::vector<double>>& ws, int key, double delta,
                     bool igm) {
  const int l = static_cast<int>(raw_ladders.size());
  std::vector<double> logits(static_cast<std::size_t>(l));
  for (int k = 0; k < l; ++k) {
    double dot = 0.0;
    for (int j = 0; j < key; ++j) {
      double km = 0.0, ks = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) km += m[i] * wm[static_cast<std::size_t>(k)][i * key + j];
      for (std::size_t i = 0; i < s.size(); ++i) ks += s[i] * ws[static_cast<std::size_t>(k)][i * key + j];
      dot += km * std::max(ks, 0.0);
    }
    logits[static_cast<std::size_t>(k)] = dot;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);

  double total = 0.0;
  for (int k = 0; k < l; ++k) {
    const auto& layers = raw_ladders[static_cast<std::size_t>(k)];
    const int d = static_cast<int>(layers.size());
    double t = 0.0;
    for (int j = d - 1; j >= 0; --j) {
      double acc = j == d - 1 ? 0.0 : t;
      for (std::size_t i = 0; i < q.size(); ++i)
        acc += (igm ? std::fabs(layers[static_cast<std::size_t>(j)][i])
                    : layers[static_cast<std::size_t>(j)][i]) *
               q[i];
      t = 1.0 / std::max(std::fabs(acc), delta);
    }
    total += std::exp(logits[static_cast<std::size_t>(k)] - mx) / z * t;
  }
  return total;
}

}  // namespace

TEST_CASE("single-layer, single-agent ladders") {
  CHECK(ladder_forward(std::vector<double>{1.0}, {{2.0}}, 0.01) == doctest::Approx(0.5));
  CHECK(ladder_forward(std::vector<double>{1.0}, {{1.0}, {1.0}}, 0.01) == doctest::Approx(0.5));
  // floor engages when the innermost layer vanishes
  const double v = ladder_forward(std::vector<double>{0.0}, {{1.0}, {1.0}}, 0.01);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(1.0 / 100.0).epsilon(1e-9));
}

TEST_CASE("ladder output stays in (0, 1/delta] for wild inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> q(3);
    for (double& v : q) v = 1e3 * rng.gauss();
    std::vector<std::vector<double>> layers(2, std::vector<double>(3));
    for (auto& layer : layers)
      for (double& v : layer) v = rng.gauss();
    const double t = ladder_forward(q, layers, 0.01);
    CHECK(std::isfinite(t));
    CHECK(t > 0.0);
    CHECK(t <= 100.0 + 1e-12);
  }
}

TEST_CASE("credits: uniform at zero heads, single ladder, normalization") {
  const int key = 4;
  std::vector<double> m = {0.3, -0.2}, s = {0.5, 0.1, -0.4};
  {
    std::vector<std::vector<double>> wm(3, std::vector<double>(2 * key, 0.0));
    std::vector<std::vector<double>> ws(3, std::vector<double>(3 * key, 0.0));
    const auto alpha = credits(m, s, wm, ws, key);
    for (double a : alpha) CHECK(a == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  {
    std::vector<std::vector<double>> wm(1, std::vector<double>(2 * key, 0.7));
    std::vector<std::vector<double>> ws(1, std::vector<double>(3 * key, -0.2));
    const auto alpha = credits(m, s, wm, ws, key);
    CHECK(alpha.size() == 1);
    CHECK(alpha[0] == doctest::Approx(1.0));
  }
  {
    Rng rng(9);
    std::vector<std::vector<double>> wm(5, std::vector<double>(2 * key));
    std::vector<std::vector<double>> ws(5, std::vector<double>(3 * key));
    for (auto& w : wm)
      for (double& v : w) v = rng.gauss();
    for (auto& w : ws)
      for (double& v : w) v = rng.gauss();
    const auto alpha = credits(m, s, wm, ws, key);
    double sum = 0.0;
    for (double a : alpha) {
      CHECK(a > 0.0);
      sum += a;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("enforce_igm transform") {
  const std::vector<double> raw = {-1.0, 2.0};
  CHECK(enforce_igm(raw, true) == std::vector<double>{1.0, 2.0});
  CHECK(enforce_igm(raw, false) == raw);
}

TEST_CASE("network forward matches the straight-line reference") {
  Rng rng(17);
  MixerConfig cfg;
  cfg.n_agents = 3;
  cfg.ladders = 4;
  cfg.depth = 2;
  cfg.delta = 0.01;
  cfg.igm = true;
  cfg.key_width = 5;
  cfg.latent = 4;
  cfg.state_width = 6;
  for (bool igm : {true, false}) {
    cfg.igm = igm;
    ParamStore store;
    Rng init(23);
    const MixerNet net = MixerNet::create(store, cfg, init);

    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> q(3), m(4), s(6);
      for (double& v : q) v = rng.uniform(0.2, 1.8);
      for (double& v : m) v = rng.gauss();
      for (double& v : s) v = rng.gauss();

      std::vector<std::vector<std::vector<double>>> raw;
      for (const auto& ladder : net.ladder_w) {
        std::vector<std::vector<double>> layers;
        for (int idx : ladder) layers.push_back(store.at(idx).values);
        raw.push_back(layers);
      }
      std::vector<std::vector<double>> wm, ws;
      for (int idx : net.head_wm) wm.push_back(store.at(idx).values);
      for (int idx : net.head_ws) ws.push_back(store.at(idx).values);

      const double expect =
          reference_mix(q, m, s, raw, wm, ws, cfg.key_width, cfg.delta, cfg.igm);
      double got = 0.0;
      MixerScratch scratch;
      mixer_forward(store, net, q.data(), m.data(), s.data(), 1, &got, scratch);
      CHECK(got == doctest::Approx(expect).epsilon(1e-12));

      Tape tape;
      MixerVars vars = mixer_leaves(tape, store, net);
      const Var qt = mixer_forward_tape(tape, vars, cfg, tape.constant({1, 3}, q),
                                        tape.constant({1, 4}, m), tape.constant({1, 6}, s));
      CHECK(tape.scalar(qt) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("single ladder with equal heads reduces to the ladder output") {
  MixerConfig cfg;
  cfg.n_agents = 2;
  cfg.ladders = 1;
  cfg.depth = 2;
  cfg.latent = 3;
  cfg.state_width = 2;
  cfg.key_width = 4;
  ParamStore store;
  Rng rng(5);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  const std::vector<double> q = {0.8, 1.2}, m = {0.1, 0.2, 0.3}, s = {1.0, -1.0};
  std::vector<std::vector<double>> layers;
  for (int idx : net.ladder_w[0]) layers.push_back(enforce_igm(store.at(idx).values, true));
  const double expect = ladder_forward(q, layers, cfg.delta);
  double got = 0.0;
  MixerScratch scratch;
  mixer_forward(store, net, q.data(), m.data(), s.data(), 1, &got, scratch);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("two identical ladders under any credits give the ladder output") {
  MixerConfig cfg;
  cfg.n_agents = 2;
  cfg.ladders = 2;
  cfg.depth = 2;
  cfg.latent = 3;
  cfg.state_width = 2;
  ParamStore store;
  Rng rng(7);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  // Copy ladder 0 weights into ladder 1.
  for (int j = 0; j < cfg.depth; ++j)
    store.at(net.ladder_w[1][static_cast<std::size_t>(j)]).values =
        store.at(net.ladder_w[0][static_cast<std::size_t>(j)]).values;
  const std::vector<double> q = {1.1, 0.6}, m = {0.4, -0.2, 0.9}, s = {0.3, 0.8};
  std::vector<std::vector<double>> layers;
  for (int idx : net.ladder_w[0]) layers.push_back(enforce_igm(store.at(idx).values, true));
  const double expect = ladder_forward(q, layers, cfg.delta);
  double got = 0.0;
  MixerScratch scratch;
  mixer_forward(store, net, q.data(), m.data(), s.data(), 1, &got, scratch);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

namespace {

double qtot_at(const ParamStore& store, const MixerNet& net, std::vector<double> q,
               const std::vector<double>& m, const std::vector<double>& s) {
  double out = 0.0;
  MixerScratch scratch;
  mixer_forward(store, net, q.data(), m.data(), s.data(), 1, &out, scratch);
  return out;
}

}  // namespace

TEST_CASE("cfn-d is additive: cross partial differences vanish") {
  MixerConfig cfg;
  cfg.n_agents = 3;
  cfg.variant = MixerVariant::kCfnD;
  cfg.single_depth = 2;
  cfg.latent = 2;
  cfg.state_width = 2;
  ParamStore store;
  Rng rng(11);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  const std::vector<double> m = {0.0, 0.0}, s = {0.0, 0.0};
  Rng points(13);
  const double h = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(3);
    for (double& v : q) v = points.uniform(0.5, 1.5);
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        auto qq = q;
        const double f00 = qtot_at(store, net, qq, m, s);
        qq[static_cast<std::size_t>(i)] += h;
        const double f10 = qtot_at(store, net, qq, m, s);
        qq[static_cast<std::size_t>(j)] += h;
        const double f11 = qtot_at(store, net, qq, m, s);
        qq[static_cast<std::size_t>(i)] -= h;
        const double f01 = qtot_at(store, net, qq, m, s);
        CHECK(std::fabs(f11 - f10 - f01 + f00) < 1e-8);
      }
  }
}

TEST_CASE("full-input cfn with depth >= 2 shows interaction capacity") {
  MixerConfig cfg;
  cfg.n_agents = 2;
  cfg.ladders = 2;
  cfg.depth = 2;
  cfg.latent = 2;
  cfg.state_width = 2;
  ParamStore store;
  Rng rng(19);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  const std::vector<double> m = {0.2, -0.1}, s = {0.4, 0.6};
  const double h = 1e-3;
  double max_cross = 0.0;
  Rng points(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q = {points.uniform(0.5, 1.5), points.uniform(0.5, 1.5)};
    auto qq = q;
    const double f00 = qtot_at(store, net, qq, m, s);
    qq[0] += h;
    const double f10 = qtot_at(store, net, qq, m, s);
    qq[1] += h;
    const double f11 = qtot_at(store, net, qq, m, s);
    qq[0] -= h;
    const double f01 = qtot_at(store, net, qq, m, s);
    max_cross = std::max(max_cross, std::fabs(f11 - f10 - f01 + f00) / (h * h));
  }
  CHECK(max_cross > 1e-4);  // nonzero mixed second difference for generic weights
}

TEST_CASE("cfn-c equals full ladders plus single-feature ladders") {
  MixerConfig cfg;
  cfg.n_agents = 2;
  cfg.ladders = 2;
  cfg.depth = 2;
  cfg.single_depth = 2;
  cfg.latent = 3;
  cfg.state_width = 2;
  cfg.variant = MixerVariant::kCfnC;
  ParamStore store;
  Rng rng(29);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  const std::vector<double> q = {0.9, 1.3}, m = {0.1, 0.5, -0.3}, s = {0.2, 0.7};

  MixerConfig cfg_full = cfg;
  cfg_full.variant = MixerVariant::kCfn;
  MixerNet full = net;
  full.cfg = cfg_full;
  full.single_w.clear();
  const double full_part = qtot_at(store, full, q, m, s);

  double singles = 0.0;
  for (int i = 0; i < 2; ++i) {
    std::vector<std::vector<double>> layers;
    for (int idx : net.single_w[static_cast<std::size_t>(i)])
      layers.push_back(enforce_igm(store.at(idx).values, true));
    singles += ladder_forward(std::vector<double>{q[static_cast<std::size_t>(i)]}, layers,
                              cfg.delta);
  }
  CHECK(qtot_at(store, net, q, m, s) == doctest::Approx(full_part + singles).epsilon(1e-12));
}

TEST_CASE("vdn variant sums the utilities") {
  MixerConfig cfg;
  cfg.n_agents = 3;
  cfg.variant = MixerVariant::kVdn;
  ParamStore store;
  Rng rng(31);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  CHECK(store.size() == 0);
  CHECK(qtot_at(store, net, {1.0, 2.0, 3.0}, {}, {}) == doctest::Approx(6.0));
}

TEST_CASE("mixer gradients match finite differences away from kinks") {
  MixerConfig cfg;
  cfg.n_agents = 2;
  cfg.ladders = 2;
  cfg.depth = 2;
  cfg.latent = 3;
  cfg.state_width = 2;
  ParamStore store;
  Rng rng(37);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  Rng points(41);
  int accepted = 0;
  while (accepted < 10) {
    std::vector<double> q(2), m(3), s(2);
    for (double& v : q) v = points.uniform(0.4, 1.6);
    for (double& v : m) v = points.gauss();
    for (double& v : s) v = points.gauss();
    Tensor qt({1, 2}, q, true);
    std::vector<Tensor*> leaves = {&qt};
    for (int i = 0; i < store.size(); ++i) leaves.push_back(&store.at(i));
    const auto build = [&](Tape& t) -> Var {
      MixerVars vars = mixer_leaves(t, store, net);
      return mixer_forward_tape(t, vars, cfg, t.leaf(qt), t.constant({1, 3}, m),
                                t.constant({1, 2}, s));
    };
    {
      Tape probe;
      build(probe);
      if (probe.min_kink_margin() < 1e-4) continue;
    }
    const auto rep = grad_check(build, leaves, 1e-5, 1e-4);
    CHECK(rep.ok);
    ++accepted;
  }
}

TEST_CASE("mix rejects mismatched utility width") {
  MixerConfig cfg;
  cfg.n_agents = 3;
  cfg.latent = 2;
  cfg.state_width = 2;
  ParamStore store;
  Rng rng(43);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  Tape t;
  MixerVars vars = mixer_leaves(t, store, net);
  const std::vector<double> q = {1.0, 2.0};
  CHECK_THROWS_AS(mixer_forward_tape(t, vars, cfg, t.constant({1, 2}, q),
                                     t.constant({1, 2}, q), t.constant({1, 2}, q)),
                  ShapeError);
}
