#include "qcofr/verify.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "qcofr/config.hpp"
#include "qcofr/lbf.hpp"
#include "qcofr/matrix_game.hpp"
#include "qcofr/mixer.hpp"
#include "qcofr/pade.hpp"
#include "qcofr/tape.hpp"
#include "qcofr/trainer.hpp"

namespace qcofr {

namespace {

using pade::Rational;

// Small positive rationals for the sign-structure checks; fine-grained
// signed rationals elsewhere (the degree law is a generic statement: exact
// relations such as w1 = -w3 genuinely drop deg(B_3), so draws must make
// coincidental cancellation improbable).
Rational random_rational(Rng& rng, bool positive) {
  if (positive) return Rational(1 + rng.index(9), 1 + rng.index(9));
  const long long num = 1 + static_cast<long long>(rng.index(1000000));
  const long long den = 1 + static_cast<long long>(rng.index(1000000));
  return Rational(rng.bernoulli(0.5) ? -num : num, den);
}

std::vector<Rational> random_weights(Rng& rng, int count, bool positive) {
  std::vector<Rational> w;
  for (int i = 0; i < count; ++i) w.push_back(random_rational(rng, positive));
  return w;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

SuiteResult verify_pade(std::uint64_t seed) {
  SuiteResult suite{"pade", {}};
  Rng rng(seed);

  {
    bool ok = true;
    std::string detail;
    for (int d = 1; d <= 8 && ok; ++d) {
      for (int trial = 0; trial < 100 && ok; ++trial) {
        const auto w = random_weights(rng, d, false);
        const auto pairs = pade::convergents(w);
        const auto [p, q] = pade::degree_law(d);
        if (pairs.back().a.degree() != p || pairs.back().b.degree() != q) {
          ok = false;
          detail = "d=" + std::to_string(d) + ": deg(A)=" +
                   std::to_string(pairs.back().a.degree()) + " deg(B)=" +
                   std::to_string(pairs.back().b.degree()) + " expected (" + std::to_string(p) +
                   "," + std::to_string(q) + ")";
        }
      }
    }
    if (ok) detail = "d=1..8, 100 random nonzero rational weight vectors each, exact";
    suite.rows.push_back({"degree law deg(A_d), deg(B_d)", ok, detail});
  }

  {
    bool ok = true;
    int min_margin = 99;
    std::string detail;
    for (int d = 1; d <= 8 && ok; ++d) {
      for (int trial = 0; trial < 50 && ok; ++trial) {
        const auto w = random_weights(rng, d + 4, true);
        const int order = d + 6;
        const auto f = pade::cf_series(w, order);
        const auto pairs = pade::convergents(w);
        const int agree = pade::order_of_agreement(f, pairs[static_cast<std::size_t>(d) - 1]);
        min_margin = std::min(min_margin, agree - (d + 1));
        if (agree < d + 1) {
          ok = false;
          detail = "d=" + std::to_string(d) + ": agreement index " + std::to_string(agree) +
                   " < " + std::to_string(d + 1);
        }
      }
    }
    if (ok) detail = "agreement index >= d+1 for d=1..8, 50 seeds";
    suite.rows.push_back({"order of agreement vs depth-(d+4) series", ok, detail});
  }

  {
    bool ok = true;
    std::string detail;
    for (int d = 1; d <= 8 && ok; ++d) {
      for (int trial = 0; trial < 50 && ok; ++trial) {
        const auto w = random_weights(rng, d + 4, true);
        const int order = d + 6;
        const auto f = pade::cf_series(w, order);
        const auto pairs = pade::convergents(w);
        const auto& pair = pairs[static_cast<std::size_t>(d) - 1];
        const auto bk = pade::Series::from_poly(pair.b, order);
        const auto ak = pade::Series::from_poly(pair.a, order);
        const auto err = f.mul(bk).sub(ak);
        const int low = err.lowest_nonzero();
        const bool sign_ok = low <= order && ((d % 2 == 0) == (err[low] > 0));
        if (low != d + 1 || !sign_ok) {
          ok = false;
          detail = "d=" + std::to_string(d) + ": lowest nonzero at " + std::to_string(low) +
                   (sign_ok ? "" : ", sign violates (-1)^k");
        }
      }
    }
    if (ok) detail = "f*B_k - A_k starts exactly at z^{k+1} with sign (-1)^k";
    suite.rows.push_back({"remainder sign/order structure", ok, detail});
  }

  {
    bool ok = true;
    std::string detail;
    for (int d = 1; d <= 8 && ok; ++d) {
      const auto w = random_weights(rng, d, false);
      const auto pairs = pade::convergents(w);
      Rational prod(1);
      for (const auto& wi : w) prod *= wi;
      if (pairs.back().b.coef(0) != prod) {
        ok = false;
        detail = "d=" + std::to_string(d);
      }
    }
    if (ok) detail = "B_d(0) = w_1 w_2 ... w_d exactly, d=1..8";
    suite.rows.push_back({"denominator constant term", ok, detail});
  }

  {
    bool ok = true;
    double worst = 0.0;
    std::string detail;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      const int d = 1 + rng.index(6);
      const auto w = random_weights(rng, d, true);
      try {
        const auto rep = pade::ladder_series_equivalence(w, d);
        worst = std::max(worst, rep.max_deviation);
        if (!rep.pass) {
          ok = false;
          detail = "deviation " + fmt(rep.max_deviation);
        }
      } catch (const pade::PadeError& e) {
        ok = false;
        detail = e.what();
      }
    }
    if (ok) detail = "50 random positive weight vectors, d<=6, max dev " + fmt(worst);
    suite.rows.push_back({"ladder equals convergent form at z=1/Q", ok, detail});
  }

  return suite;
}

namespace {

struct PrimitiveCase {
  std::string name;
  int inputs;  // 1 or 2
  std::function<Var(Tape&, Var, Var)> build;
  double scale = 2.0;
};

}  // namespace

SuiteResult verify_grad(std::uint64_t seed) {
  SuiteResult suite{"grad", {}};
  Rng rng(seed);
  const double step = 1e-5, tol = 1e-4;

  const std::vector<PrimitiveCase> cases = {
      {"matmul", 2, [](Tape& t, Var a, Var b) { return t.sum(t.square(t.matmul(a, b))); }},
      {"add", 2, [](Tape& t, Var a, Var b) { return t.sum(t.square(t.add(a, b))); }},
      {"sub", 2, [](Tape& t, Var a, Var b) { return t.sum(t.square(t.sub(a, b))); }},
      {"mul", 2, [](Tape& t, Var a, Var b) { return t.sum(t.square(t.mul(a, b))); }},
      {"affine", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.affine(a, -1.7, 0.3))); }},
      {"abs", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.abs(a))); }},
      {"max_const", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.max_const(a, 0.01))); }},
      {"reciprocal", 1,
       [](Tape& t, Var a, Var) {
         return t.sum(t.square(t.reciprocal(t.max_const(t.abs(a), 0.01))));
       }},
      {"relu", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.relu(a))); }},
      {"sigmoid", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.sigmoid(a))); }},
      {"tanh", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.tanh(a))); }},
      {"exp", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.exp(a))); }, 0.5},
      {"log", 1,
       [](Tape& t, Var a, Var) { return t.sum(t.square(t.log(t.max_const(t.abs(a), 0.05)))); }},
      {"square", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.square(a))); }},
      {"softmax", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.softmax(a))); }},
      {"row_sum", 1, [](Tape& t, Var a, Var) { return t.sum(t.square(t.row_sum(a))); }},
      {"mean", 1, [](Tape& t, Var a, Var) { return t.square(t.mean(a)); }},
      {"concat+slice", 2,
       [](Tape& t, Var a, Var b) {
         const std::vector<Var> parts = {a, b};
         const Var c = t.concat_cols(parts);
         return t.sum(t.square(t.col_slice(c, 1, 3)));
       }},
      {"reshape", 1,
       [](Tape& t, Var a, Var) { return t.sum(t.square(t.reshape(a, {6, 2}))); }},
  };

  for (const auto& c : cases) {
    double worst = 0.0;
    bool ok = true;
    int accepted = 0;
    while (accepted < 100) {
      Tensor a({3, 4}, 0.0, true), b({4, 3}, 0.0, true);
      if (c.name != "matmul") b = Tensor({3, 4}, 0.0, true);
      for (double& v : a.values) v = c.scale * rng.gauss();
      for (double& v : b.values) v = c.scale * rng.gauss();
      std::vector<Tensor*> leaves = {&a};
      if (c.inputs == 2) leaves.push_back(&b);
      const auto build = [&](Tape& t) {
        const Var va = t.leaf(a);
        const Var vb = c.inputs == 2 ? t.leaf(b) : Var{};
        return c.build(t, va, vb);
      };
      // Sample away from kinks by a 10*step margin.
      {
        Tape probe;
        build(probe);
        if (probe.min_kink_margin() < 10 * step) continue;
      }
      const auto rep = grad_check(build, leaves, step, tol);
      worst = std::max(worst, rep.max_rel_dev);
      ok = ok && rep.ok;
      ++accepted;
    }
    suite.rows.push_back({"primitive " + c.name, ok, "max rel dev " + fmt(worst) + " at 100 pts"});
  }

  {
    const auto rep = full_loss_grad_check(seed ^ 0xf00dULL, 20, step, tol);
    suite.rows.push_back({"full combined loss (TD + variational)", rep.ok,
                          "max rel dev " + fmt(rep.max_rel_dev) + " at " +
                              std::to_string(rep.points) + " parameter points"});
  }

  return suite;
}

FullLossGradReport full_loss_grad_check(std::uint64_t seed, int points, double step, double tol) {
  FullLossGradReport report;
  Rng seeder(seed);
  while (report.points < points) {
    RunConfig cfg;
    cfg.env_type = "matrix";
    cfg.payoff = "climbing";
    cfg.seed = seeder.next_u64();
    cfg.hidden = 4;
    cfg.latent = 4;
    cfg.ladders = 2;
    cfg.depth = 2;
    cfg.key_width = 4;
    cfg.beta = 0.05;
    cfg.batch = 2;

    const auto env = make_env(cfg);
    Learner learner(cfg, *env);
    Rng rollout(cfg.seed ^ 1);
    std::vector<Episode> eps;
    for (int e = 0; e < 2; ++e)
      eps.push_back(learner.collect_episode(*env, rollout.next_u64(), 1.0, rollout));
    std::vector<const Episode*> batch = {&eps[0], &eps[1]};
    learner.freeze_batch(batch);

    learner.params().zero_grad();
    const auto base = learner.frozen_loss_backward();
    if (base.kink_margin < 10 * step) continue;  // resample away from kinks

    double max_rel = 0.0;
    ParamStore& ps = learner.params();
    for (int p = 0; p < ps.size(); ++p) {
      Tensor& t = ps.at(p);
      for (int c = 0; c < t.shape.count(); ++c) {
        const double saved = t.values[static_cast<std::size_t>(c)];
        t.values[static_cast<std::size_t>(c)] = saved + step;
        const double up = learner.frozen_loss().value;
        t.values[static_cast<std::size_t>(c)] = saved - step;
        const double down = learner.frozen_loss().value;
        t.values[static_cast<std::size_t>(c)] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double g = t.grad[static_cast<std::size_t>(c)];
        const double rel = std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1e-3});
        max_rel = std::max(max_rel, rel);
      }
    }
    report.max_rel_dev = std::max(report.max_rel_dev, max_rel);
    ++report.points;
  }
  report.ok = report.max_rel_dev <= tol;
  return report;
}

IgmStats igm_consistency(std::uint64_t seed, int draws, bool igm_mode, int ladders, int depth,
                         double delta) {
  Rng rng(seed);
  IgmStats stats;
  stats.draws = draws;
  const int n = 2, nu = 3, latent = 8, state_w = 4, key = 8;
  for (int trial = 0; trial < draws; ++trial) {
    // Utilities drawn in the positive value range the mixer is designed
    // around; ladder weights at initialization scale.
    double u1[nu], u2[nu];
    for (double& v : u1) v = rng.uniform();
    for (double& v : u2) v = rng.uniform();
    std::vector<std::vector<std::vector<double>>> raw(
        static_cast<std::size_t>(ladders),
        std::vector<std::vector<double>>(static_cast<std::size_t>(depth),
                                         std::vector<double>(n)));
    for (auto& ladder : raw)
      for (auto& layer : ladder)
        for (double& v : layer) v = 0.1 * rng.gauss();

    std::vector<std::vector<double>> wm(static_cast<std::size_t>(ladders)),
        ws(static_cast<std::size_t>(ladders));
    for (int k = 0; k < ladders; ++k) {
      wm[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(latent) * key);
      ws[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(state_w) * key);
      for (double& v : wm[static_cast<std::size_t>(k)]) v = rng.gauss() / std::sqrt(latent);
      for (double& v : ws[static_cast<std::size_t>(k)]) v = rng.gauss() / std::sqrt(state_w);
    }
    std::vector<double> m(latent), s(state_w);
    for (double& v : m) v = rng.gauss();
    for (double& v : s) v = rng.gauss();
    const auto alpha = credits(m, s, wm, ws, key);

    const auto qtot = [&](int a, int b) {
      const std::vector<double> q = {u1[a], u2[b]};
      double total = 0.0;
      for (int k = 0; k < ladders; ++k) {
        std::vector<std::vector<double>> eff;
        for (const auto& layer : raw[static_cast<std::size_t>(k)])
          eff.push_back(enforce_igm(layer, igm_mode));
        total += alpha[static_cast<std::size_t>(k)] * ladder_forward(q, eff, delta);
      }
      return total;
    };

    int best_a = 0, best_b = 0;
    double best = -1.0;
    for (int a = 0; a < nu; ++a)
      for (int b = 0; b < nu; ++b) {
        const double v = qtot(a, b);
        if (v > best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    int g1 = 0, g2 = 0;
    for (int a = 1; a < nu; ++a) {
      if (u1[a] > u1[g1]) g1 = a;
      if (u2[a] > u2[g2]) g2 = a;
    }
    if (best_a == g1 && best_b == g2) {
      ++stats.consistent;
    } else if (stats.violations.size() < 5) {
      std::ostringstream os;
      os << std::setprecision(4) << "joint argmax (" << best_a << "," << best_b
         << ") vs greedy (" << g1 << "," << g2 << "); u1=[" << u1[0] << "," << u1[1] << ","
         << u1[2] << "] u2=[" << u2[0] << "," << u2[1] << "," << u2[2] << "] w=[";
      for (const auto& ladder : raw)
        for (const auto& layer : ladder)
          for (double v : layer) os << v << " ";
      os << "]";
      stats.violations.push_back(os.str());
    }
  }
  return stats;
}

SuiteResult verify_igm(std::uint64_t seed) {
  SuiteResult suite{"igm", {}};
  const auto on = igm_consistency(seed, 1000, true, 4, 2, 0.01);
  {
    std::string detail = "rate " + fmt(on.rate()) + " over 1000 draws (l=4, d=2)";
    for (const auto& v : on.violations) detail += "\n      violation: " + v;
    suite.rows.push_back({"argmax consistency, igm mode on (>= 0.99)", on.rate() >= 0.99, detail});
  }
  const auto off = igm_consistency(seed ^ 1, 1000, false, 4, 2, 0.01);
  suite.rows.push_back({"argmax consistency, igm mode off (reported)", true,
                        "rate " + fmt(off.rate()) + " over 1000 draws"});
  return suite;
}

SuiteResult verify_env(std::uint64_t seed) {
  SuiteResult suite{"env", {}};
  LbfConfig cfg;
  cfg.width = 6;
  cfg.height = 6;
  cfg.agent_levels = {1, 2};
  cfg.food_levels = {3, 1};
  cfg.max_steps = 50;

  const auto fresh = [&](std::vector<std::array<int, 2>> agents,
                         std::vector<std::array<int, 2>> foods) {
    LbfState st;
    st.agent_pos = std::move(agents);
    st.food_pos = std::move(foods);
    st.collected.assign(cfg.food_levels.size(), 0);
    st.t = 0;
    return st;
  };

  {
    // Two agents racing into the same empty cell: both stay, both pay.
    auto st = fresh({{2, 1}, {2, 3}}, {{5, 5}, {5, 0}});
    const auto out = lbf_step(cfg, st, {4, 3});
    const bool ok = st.agent_pos[0] == std::array<int, 2>{2, 1} &&
                    st.agent_pos[1] == std::array<int, 2>{2, 3} &&
                    std::fabs(out.reward - 2 * cfg.move_penalty) < 1e-12;
    suite.rows.push_back({"collision cancellation", ok,
                          "both moves canceled, reward = 2 x move penalty"});
  }
  {
    // Level-1 agent alone cannot lift level-3 food.
    auto st = fresh({{2, 1}, {5, 5}}, {{2, 2}, {0, 0}});
    const auto out = lbf_step(cfg, st, {kLbfLoad, 0});
    const bool ok = !st.collected[0] && out.reward == 0.0;
    suite.rows.push_back({"under-leveled load fails", ok, "level 1 vs food level 3"});
  }
  {
    // Coalition 1+2 >= 3 collects; reward is level-normalized.
    auto st = fresh({{2, 1}, {1, 2}}, {{2, 2}, {5, 5}});
    const auto out = lbf_step(cfg, st, {kLbfLoad, kLbfLoad});
    const bool ok = st.collected[0] == 1 && std::fabs(out.reward - 3.0 / 4.0) < 1e-12;
    suite.rows.push_back({"coalition collection + unit-sum reward", ok,
                          "reward 3/4 for the level-3 item of a 4-level board"});
  }
  {
    // Movement penalty also applies to canceled moves (wall bump).
    auto st = fresh({{0, 0}, {5, 5}}, {{2, 2}, {3, 3}});
    const auto out = lbf_step(cfg, st, {1, 0});
    const bool ok = st.agent_pos[0] == std::array<int, 2>{0, 0} &&
                    std::fabs(out.reward - cfg.move_penalty) < 1e-12;
    suite.rows.push_back({"penalty on canceled move", ok, "wall bump costs -0.002"});
  }
  {
    // Episode cap.
    auto st = fresh({{0, 0}, {5, 5}}, {{2, 2}, {3, 3}});
    bool done = false;
    for (int t = 0; t < cfg.max_steps; ++t) done = lbf_step(cfg, st, {0, 0}).done;
    suite.rows.push_back({"50-step cap", done && st.t == 50, "idle episode terminates at t=50"});
  }
  {
    // Clearing the board yields +1 before penalties.
    LbfConfig c2 = cfg;
    c2.agent_levels = {2, 2};
    c2.food_levels = {1, 1};
    auto st = fresh({{2, 1}, {3, 4}}, {{2, 2}, {3, 3}});
    const auto out = lbf_step(c2, st, {kLbfLoad, kLbfLoad});
    const bool ok = out.done && std::fabs(out.reward - 1.0) < 1e-12;
    suite.rows.push_back({"cleared board sums to +1", ok, "two items collected in one step"});
  }
  {
    bool ok = true;
    Rng rng(seed);
    for (int trial = 0; trial < 20 && ok; ++trial) {
      const std::uint64_t s = rng.next_u64();
      LbfState a = lbf_reset(cfg, s), b = lbf_reset(cfg, s);
      for (int t = 0; t < 30; ++t) {
        std::vector<int> acts = {rng.index(kLbfNumActions), rng.index(kLbfNumActions)};
        const auto ra = lbf_step(cfg, a, acts);
        const auto rb = lbf_step(cfg, b, acts);
        if (ra.reward != rb.reward || ra.done != rb.done || a.agent_pos != b.agent_pos ||
            lbf_observe(cfg, a, 0) != lbf_observe(cfg, b, 0)) {
          ok = false;
          break;
        }
        if (ra.done) break;
      }
    }
    suite.rows.push_back({"determinism given (seed, actions)", ok, "20 seeded trajectories"});
  }
  return suite;
}

void print_suite(const SuiteResult& suite, std::ostream& os) {
  os << "suite: " << suite.suite << "\n";
  for (const auto& r : suite.rows)
    os << "  [" << (r.pass ? "PASS" : "FAIL") << "] " << r.name
       << (r.detail.empty() ? "" : "  -- " + r.detail) << "\n";
  os << (suite.all_pass() ? "  all checks passed" : "  FAILURES PRESENT") << "\n";
}

}  // namespace qcofr
