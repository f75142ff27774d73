#include <algorithm>
#include <set>

#include "doctest.h"
#include "qcofr/lbf.hpp"
#include "qcofr/matrix_game.hpp"

using namespace qcofr;

namespace {

LbfState board(const LbfConfig& cfg, std::vector<std::array<int, 2>> agents,
               std::vector<std::array<int, 2>> foods) {
  LbfState st;
  st.agent_pos = std::move(agents);
  st.food_pos = std::move(foods);
  st.collected.assign(cfg.food_levels.size(), 0);
  return st;
}

}  // namespace

TEST_CASE("reset: determinism, distinct cells, seed sensitivity") {
  LbfConfig cfg;
  cfg.agent_levels = {1, 1, 1};
  cfg.food_levels = {1, 2, 1};
  const LbfState a = lbf_reset(cfg, 99), b = lbf_reset(cfg, 99), c = lbf_reset(cfg, 100);
  CHECK(a.agent_pos == b.agent_pos);
  CHECK(a.food_pos == b.food_pos);

  std::set<std::pair<int, int>> cells;
  for (const auto& p : a.agent_pos) cells.insert({p[0], p[1]});
  for (const auto& p : a.food_pos) cells.insert({p[0], p[1]});
  CHECK(cells.size() == 6);

  CHECK((a.agent_pos != c.agent_pos || a.food_pos != c.food_pos));
}

TEST_CASE("reset rejects an overfull grid") {
  LbfConfig cfg;
  cfg.width = 2;
  cfg.height = 2;
  cfg.agent_levels = {1, 1, 1};
  cfg.food_levels = {1, 1};
  CHECK_THROWS_AS(lbf_reset(cfg, 1), std::invalid_argument);
}

TEST_CASE("movement, chains, swaps and blocking") {
  LbfConfig cfg;
  cfg.width = 6;
  cfg.height = 6;
  cfg.agent_levels = {1, 1};
  cfg.food_levels = {1};

  SUBCASE("simple moves apply simultaneously") {
    auto st = board(cfg, {{2, 2}, {4, 4}}, {{0, 0}});
    lbf_step(cfg, st, {4, 3});  // right, left
    CHECK(st.agent_pos[0] == std::array<int, 2>{2, 3});
    CHECK(st.agent_pos[1] == std::array<int, 2>{4, 3});
  }
  SUBCASE("chain into a vacated cell succeeds when the leader moves") {
    auto st = board(cfg, {{2, 2}, {2, 3}}, {{0, 0}});
    lbf_step(cfg, st, {4, 4});  // both right
    CHECK(st.agent_pos[0] == std::array<int, 2>{2, 3});
    CHECK(st.agent_pos[1] == std::array<int, 2>{2, 4});
  }
  SUBCASE("chain collapses when the leader is blocked") {
    auto st = board(cfg, {{2, 2}, {2, 3}}, {{2, 4}});  // food blocks the leader
    lbf_step(cfg, st, {4, 4});
    CHECK(st.agent_pos[0] == std::array<int, 2>{2, 2});
    CHECK(st.agent_pos[1] == std::array<int, 2>{2, 3});
  }
  SUBCASE("swap through each other is a legal simultaneous move") {
    auto st = board(cfg, {{2, 2}, {2, 3}}, {{0, 0}});
    lbf_step(cfg, st, {4, 3});
    CHECK(st.agent_pos[0] == std::array<int, 2>{2, 3});
    CHECK(st.agent_pos[1] == std::array<int, 2>{2, 2});
  }
  SUBCASE("collision cancels both and still charges the penalty") {
    auto st = board(cfg, {{2, 1}, {2, 3}}, {{0, 0}});
    const auto out = lbf_step(cfg, st, {4, 3});
    CHECK(st.agent_pos[0] == std::array<int, 2>{2, 1});
    CHECK(st.agent_pos[1] == std::array<int, 2>{2, 3});
    CHECK(out.reward == doctest::Approx(2 * cfg.move_penalty));
  }
  SUBCASE("invalid action id raises") {
    auto st = board(cfg, {{2, 2}, {4, 4}}, {{0, 0}});
    CHECK_THROWS_AS(lbf_step(cfg, st, {6, 0}), std::invalid_argument);
  }
}

TEST_CASE("collision rule is order-independent") {
  LbfConfig cfg;
  cfg.width = 5;
  cfg.height = 5;
  cfg.agent_levels = {1, 1, 1};
  cfg.food_levels = {1};
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    LbfState st = lbf_reset(cfg, rng.next_u64());
    std::vector<int> actions = {rng.index(5), rng.index(5), rng.index(5)};

    LbfState direct = st;
    lbf_step(cfg, direct, actions);

    // Permute agents 0<->2, run, and undo the permutation.
    LbfConfig pcfg = cfg;
    LbfState perm = st;
    std::swap(perm.agent_pos[0], perm.agent_pos[2]);
    std::vector<int> pactions = {actions[2], actions[1], actions[0]};
    lbf_step(pcfg, perm, pactions);
    std::swap(perm.agent_pos[0], perm.agent_pos[2]);
    CHECK(perm.agent_pos == direct.agent_pos);
  }
}

TEST_CASE("loading rules and reward normalization") {
  LbfConfig cfg;
  cfg.width = 6;
  cfg.height = 6;
  cfg.agent_levels = {1, 2};
  cfg.food_levels = {3, 1};

  SUBCASE("a lone under-leveled agent fails") {
    auto st = board(cfg, {{2, 1}, {5, 5}}, {{2, 2}, {0, 0}});
    const auto out = lbf_step(cfg, st, {kLbfLoad, 0});
    CHECK(!st.collected[0]);
    CHECK(out.reward == 0.0);
  }
  SUBCASE("a coalition meeting the level collects and reward is normalized") {
    auto st = board(cfg, {{2, 1}, {1, 2}}, {{2, 2}, {0, 0}});
    const auto out = lbf_step(cfg, st, {kLbfLoad, kLbfLoad});
    CHECK(st.collected[0] == 1);
    CHECK(out.reward == doctest::Approx(3.0 / 4.0));
  }
  SUBCASE("diagonal neighbours are not adjacent") {
    auto st = board(cfg, {{1, 1}, {3, 3}}, {{2, 2}, {0, 0}});
    lbf_step(cfg, st, {kLbfLoad, kLbfLoad});
    CHECK(!st.collected[0]);
  }
  SUBCASE("done when every item is gone") {
    LbfConfig c2 = cfg;
    c2.agent_levels = {3, 3};
    auto st = board(c2, {{2, 1}, {0, 1}}, {{2, 2}, {0, 0}});
    const auto out = lbf_step(c2, st, {kLbfLoad, kLbfLoad});
    CHECK(out.done);
    CHECK(out.reward == doctest::Approx(1.0));
  }
}

TEST_CASE("observation encoding") {
  LbfConfig cfg;
  cfg.width = 6;
  cfg.height = 6;
  cfg.agent_levels = {1, 2};
  cfg.food_levels = {4};
  const int win = 2 * cfg.sight + 1;
  REQUIRE(lbf_obs_width(cfg) == win * win * 5 + 3);

  SUBCASE("agent alone sees empties plus itself at the center") {
    auto st = board(cfg, {{3, 3}, {0, 0}}, {{5, 5}});
    st.collected[0] = 1;  // hide the food
    const auto obs = lbf_observe(cfg, st, 0);
    const int center = (cfg.sight * win + cfg.sight) * 5;
    CHECK(obs[static_cast<std::size_t>(center) + 1] == 1.0);       // agent class
    CHECK(obs[static_cast<std::size_t>(center) + 4] ==
          doctest::Approx(1.0 / 4.0));  // own level / max level
    int empties = 0;
    for (int cell = 0; cell < win * win; ++cell)
      if (obs[static_cast<std::size_t>(cell) * 5] == 1.0) ++empties;
    CHECK(empties == win * win - 1);
  }
  SUBCASE("corner view is walled off") {
    auto st = board(cfg, {{0, 0}, {5, 5}}, {{3, 3}});
    const auto obs = lbf_observe(cfg, st, 0);
    int walls = 0;
    for (int cell = 0; cell < win * win; ++cell)
      if (obs[static_cast<std::size_t>(cell) * 5 + 3] == 1.0) ++walls;
    CHECK(walls == win * win - 3 * 3);  // only a 3x3 quadrant is on-grid
  }
  SUBCASE("food one cell east with normalized level") {
    auto st = board(cfg, {{3, 3}, {0, 0}}, {{3, 4}});
    const auto obs = lbf_observe(cfg, st, 0);
    const int east = (cfg.sight * win + cfg.sight + 1) * 5;
    CHECK(obs[static_cast<std::size_t>(east) + 2] == 1.0);  // food class
    CHECK(obs[static_cast<std::size_t>(east) + 4] == doctest::Approx(1.0));
    // own absolute position is normalized
    const std::size_t base = static_cast<std::size_t>(win) * win * 5;
    CHECK(obs[base] == doctest::Approx(3.0 / 5.0));
    CHECK(obs[base + 1] == doctest::Approx(3.0 / 5.0));
  }
}

TEST_CASE("trajectory invariants: rewards bounded, flags monotone, no overlap") {
  LbfConfig cfg;
  cfg.width = 7;
  cfg.height = 7;
  cfg.agent_levels = {1, 2};
  cfg.food_levels = {2, 1};
  cfg.max_steps = 50;
  Rng rng(17);
  for (int episode = 0; episode < 30; ++episode) {
    LbfState st = lbf_reset(cfg, rng.next_u64());
    double ret = 0.0;
    int collected_before = 0;
    for (int t = 0; t < cfg.max_steps; ++t) {
      std::vector<int> actions = {rng.index(kLbfNumActions), rng.index(kLbfNumActions)};
      const auto out = lbf_step(cfg, st, actions);
      ret += out.reward;
      const int collected_now =
          static_cast<int>(std::count(st.collected.begin(), st.collected.end(), 1));
      CHECK(collected_now >= collected_before);
      collected_before = collected_now;
      CHECK(st.agent_pos[0] != st.agent_pos[1]);
      if (out.done) break;
    }
    CHECK(ret <= 1.0 + 1e-12);
    CHECK(ret >= cfg.max_steps * 2 * cfg.move_penalty - 1e-12);
  }
}

TEST_CASE("matrix game fixture and symmetry") {
  const MatrixGameConfig g = climbing_game();
  CHECK(matrix_step(g, {0, 0}) == 11.0);
  CHECK(matrix_step(g, {0, 1}) == -30.0);
  CHECK(matrix_step(g, {2, 2}) == 5.0);
  CHECK_THROWS_AS(matrix_step(g, {3, 0}), std::invalid_argument);

  MatrixGameConfig id;
  id.n_agents = 2;
  id.n_actions = 2;
  id.payoff = {1, 0, 0, 1};
  CHECK(matrix_step(id, {1, 1}) == 1.0);

  // Relabeling both agents' actions consistently permutes payoffs.
  MatrixGameConfig perm = g;
  const int p[3] = {2, 0, 1};  // new index -> old index
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      perm.payoff[static_cast<std::size_t>(a) * 3 + b] =
          g.payoff[static_cast<std::size_t>(p[a]) * 3 + p[b]];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      CHECK(matrix_step(perm, {a, b}) == matrix_step(g, {p[a], p[b]}));
}

TEST_CASE("env adapters expose consistent shapes") {
  LbfConfig lc;
  lc.agent_levels = {1, 1};
  lc.food_levels = {1};
  LbfEnv env(lc);
  std::vector<std::vector<double>> obs;
  std::vector<double> state;
  env.reset(3, obs, state);
  CHECK(static_cast<int>(obs.size()) == env.n_agents());
  CHECK(static_cast<int>(obs[0].size()) == env.obs_width());
  CHECK(static_cast<int>(state.size()) == env.state_width());
  const auto r = env.step({0, 0});
  CHECK(static_cast<int>(r.obs[0].size()) == env.obs_width());

  MatrixGameEnv menv(climbing_game());
  menv.reset(0, obs, state);
  const auto mr = menv.step({1, 2});
  CHECK(mr.reward == 6.0);
  CHECK(mr.done);
}
