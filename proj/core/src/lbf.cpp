#include "qcofr/lbf.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace qcofr {

namespace {

constexpr int kMoveDr[] = {0, -1, 1, 0, 0};
constexpr int kMoveDc[] = {0, 0, 0, -1, 1};

int max_level(const LbfConfig& cfg) {
  int m = 1;
  for (int v : cfg.agent_levels) m = std::max(m, v);
  for (int v : cfg.food_levels) m = std::max(m, v);
  return m;
}

bool adjacent4(const std::array<int, 2>& a, const std::array<int, 2>& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) == 1;
}

}  // namespace

LbfState lbf_reset(const LbfConfig& cfg, std::uint64_t seed) {
  const int total = cfg.width * cfg.height;
  const int need = cfg.n_agents() + cfg.n_food();
  if (need > total)
    throw std::invalid_argument("lbf_reset: grid " + std::to_string(cfg.width) + "x" +
                                std::to_string(cfg.height) + " too small for " +
                                std::to_string(need) + " entities");
  for (int lv : cfg.agent_levels)
    if (lv < 1) throw std::invalid_argument("lbf_reset: agent levels must be >= 1");
  for (int lv : cfg.food_levels)
    if (lv < 1) throw std::invalid_argument("lbf_reset: food levels must be >= 1");

  LbfState st;
  st.rng = Rng(seed);
  // Partial Fisher-Yates draws `need` distinct cells uniformly.
  std::vector<int> cells(static_cast<std::size_t>(total));
  std::iota(cells.begin(), cells.end(), 0);
  for (int k = 0; k < need; ++k) {
    const int j = k + st.rng.index(total - k);
    std::swap(cells[static_cast<std::size_t>(k)], cells[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < cfg.n_agents(); ++i)
    st.agent_pos.push_back({cells[static_cast<std::size_t>(i)] / cfg.width,
                            cells[static_cast<std::size_t>(i)] % cfg.width});
  for (int f = 0; f < cfg.n_food(); ++f) {
    const int c = cells[static_cast<std::size_t>(cfg.n_agents() + f)];
    st.food_pos.push_back({c / cfg.width, c % cfg.width});
  }
  st.collected.assign(static_cast<std::size_t>(cfg.n_food()), 0);
  st.t = 0;
  return st;
}

LbfStepOutcome lbf_step(const LbfConfig& cfg, LbfState& st, const std::vector<int>& actions) {
  const int n = cfg.n_agents();
  if (static_cast<int>(actions.size()) != n)
    throw std::invalid_argument("lbf_step: expected " + std::to_string(n) + " actions");
  for (int a : actions)
    if (a < 0 || a >= kLbfNumActions)
      throw std::invalid_argument("lbf_step: invalid action id " + std::to_string(a));

  LbfStepOutcome out;

  // Proposals. A move attempt costs the movement penalty whether or not it
  // ends up canceled.
  std::vector<std::array<int, 2>> target(st.agent_pos.begin(), st.agent_pos.end());
  std::vector<std::uint8_t> active(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 1 || a > 4) continue;
    out.reward += cfg.move_penalty;
    const int r = st.agent_pos[static_cast<std::size_t>(i)][0] + kMoveDr[a];
    const int c = st.agent_pos[static_cast<std::size_t>(i)][1] + kMoveDc[a];
    if (r < 0 || r >= cfg.height || c < 0 || c >= cfg.width) continue;  // wall
    bool onto_food = false;
    for (int f = 0; f < cfg.n_food(); ++f)
      if (!st.collected[static_cast<std::size_t>(f)] &&
          st.food_pos[static_cast<std::size_t>(f)] == std::array<int, 2>{r, c})
        onto_food = true;
    if (onto_food) continue;  // food cells block movement
    target[static_cast<std::size_t>(i)] = {r, c};
    active[static_cast<std::size_t>(i)] = 1;
  }

  // Any cell targeted by two or more proposals cancels all of them.
  for (int i = 0; i < n; ++i) {
    if (!active[static_cast<std::size_t>(i)]) continue;
    for (int j = i + 1; j < n; ++j) {
      if (!active[static_cast<std::size_t>(j)]) continue;
      if (target[static_cast<std::size_t>(i)] == target[static_cast<std::size_t>(j)]) {
        active[static_cast<std::size_t>(i)] = 0;
        active[static_cast<std::size_t>(j)] = 0;
      }
    }
  }

  // Moves into a cell whose occupant stays put cancel; iterate to a fixed
  // point so that chains resolve and mutual swaps stay legal.
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const bool j_stays = !active[static_cast<std::size_t>(j)];
        if (j_stays && st.agent_pos[static_cast<std::size_t>(j)] ==
                           target[static_cast<std::size_t>(i)]) {
          active[static_cast<std::size_t>(i)] = 0;
          changed = true;
          break;
        }
      }
    }
  }
  for (int i = 0; i < n; ++i)
    if (active[static_cast<std::size_t>(i)])
      st.agent_pos[static_cast<std::size_t>(i)] = target[static_cast<std::size_t>(i)];

  // Loading: every agent choosing load and adjacent to the same uncollected
  // food pools its level; the food is collected when the pool reaches its
  // level. Rewards are normalized by the total food level on the board.
  const double level_sum = static_cast<double>(
      std::accumulate(cfg.food_levels.begin(), cfg.food_levels.end(), 0));
  for (int f = 0; f < cfg.n_food(); ++f) {
    if (st.collected[static_cast<std::size_t>(f)]) continue;
    int pool = 0;
    for (int i = 0; i < n; ++i)
      if (actions[static_cast<std::size_t>(i)] == kLbfLoad &&
          adjacent4(st.agent_pos[static_cast<std::size_t>(i)],
                    st.food_pos[static_cast<std::size_t>(f)]))
        pool += cfg.agent_levels[static_cast<std::size_t>(i)];
    if (pool > 0 && pool >= cfg.food_levels[static_cast<std::size_t>(f)]) {
      st.collected[static_cast<std::size_t>(f)] = 1;
      out.reward += cfg.food_levels[static_cast<std::size_t>(f)] / level_sum;
    }
  }

  st.t += 1;
  const bool all_collected =
      std::all_of(st.collected.begin(), st.collected.end(), [](std::uint8_t c) { return c != 0; });
  out.done = all_collected || st.t >= cfg.max_steps;
  return out;
}

int lbf_obs_width(const LbfConfig& cfg) {
  const int win = 2 * cfg.sight + 1;
  return win * win * 5 + 3;
}

int lbf_state_width(const LbfConfig& cfg) { return 3 * cfg.n_agents() + 4 * cfg.n_food(); }

std::vector<double> lbf_observe(const LbfConfig& cfg, const LbfState& st, int agent) {
  const int win = 2 * cfg.sight + 1;
  const double lvl_norm = static_cast<double>(max_level(cfg));
  std::vector<double> obs(static_cast<std::size_t>(lbf_obs_width(cfg)), 0.0);
  const auto [ar, ac] = st.agent_pos[static_cast<std::size_t>(agent)];

  int cell = 0;
  for (int dr = -cfg.sight; dr <= cfg.sight; ++dr) {
    for (int dc = -cfg.sight; dc <= cfg.sight; ++dc, ++cell) {
      double* slot = obs.data() + static_cast<std::size_t>(cell) * 5;
      const int r = ar + dr, c = ac + dc;
      if (r < 0 || r >= cfg.height || c < 0 || c >= cfg.width) {
        slot[3] = 1.0;  // wall
        continue;
      }
      int occupant_level = 0;
      int klass = 0;  // empty
      for (int i = 0; i < cfg.n_agents(); ++i)
        if (st.agent_pos[static_cast<std::size_t>(i)] == std::array<int, 2>{r, c}) {
          klass = 1;
          occupant_level = cfg.agent_levels[static_cast<std::size_t>(i)];
        }
      if (klass == 0)
        for (int f = 0; f < cfg.n_food(); ++f)
          if (!st.collected[static_cast<std::size_t>(f)] &&
              st.food_pos[static_cast<std::size_t>(f)] == std::array<int, 2>{r, c}) {
            klass = 2;
            occupant_level = cfg.food_levels[static_cast<std::size_t>(f)];
          }
      slot[klass] = 1.0;
      if (klass != 0) slot[4] = occupant_level / lvl_norm;
    }
  }
  const std::size_t base = static_cast<std::size_t>(win) * win * 5;
  obs[base] = cfg.height > 1 ? static_cast<double>(ar) / (cfg.height - 1) : 0.0;
  obs[base + 1] = cfg.width > 1 ? static_cast<double>(ac) / (cfg.width - 1) : 0.0;
  obs[base + 2] = cfg.agent_levels[static_cast<std::size_t>(agent)] / lvl_norm;
  return obs;
}

std::vector<double> lbf_state_vector(const LbfConfig& cfg, const LbfState& st) {
  const double lvl_norm = static_cast<double>(max_level(cfg));
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(lbf_state_width(cfg)));
  for (int i = 0; i < cfg.n_agents(); ++i) {
    s.push_back(cfg.height > 1
                    ? static_cast<double>(st.agent_pos[static_cast<std::size_t>(i)][0]) /
                          (cfg.height - 1)
                    : 0.0);
    s.push_back(cfg.width > 1 ? static_cast<double>(st.agent_pos[static_cast<std::size_t>(i)][1]) /
                                    (cfg.width - 1)
                              : 0.0);
    s.push_back(cfg.agent_levels[static_cast<std::size_t>(i)] / lvl_norm);
  }
  for (int f = 0; f < cfg.n_food(); ++f) {
    s.push_back(cfg.height > 1
                    ? static_cast<double>(st.food_pos[static_cast<std::size_t>(f)][0]) /
                          (cfg.height - 1)
                    : 0.0);
    s.push_back(cfg.width > 1 ? static_cast<double>(st.food_pos[static_cast<std::size_t>(f)][1]) /
                                    (cfg.width - 1)
                              : 0.0);
    s.push_back(cfg.food_levels[static_cast<std::size_t>(f)] / lvl_norm);
    s.push_back(st.collected[static_cast<std::size_t>(f)] ? 1.0 : 0.0);
  }
  return s;
}

void LbfEnv::reset(std::uint64_t seed, std::vector<std::vector<double>>& obs,
                   std::vector<double>& state) {
  state_ = lbf_reset(cfg_, seed);
  obs.clear();
  for (int i = 0; i < cfg_.n_agents(); ++i) obs.push_back(lbf_observe(cfg_, state_, i));
  state = lbf_state_vector(cfg_, state_);
}

StepResult LbfEnv::step(const std::vector<int>& actions) {
  const LbfStepOutcome o = lbf_step(cfg_, state_, actions);
  StepResult r;
  r.reward = o.reward;
  r.done = o.done;
  for (int i = 0; i < cfg_.n_agents(); ++i) r.obs.push_back(lbf_observe(cfg_, state_, i));
  r.state = lbf_state_vector(cfg_, state_);
  return r;
}

}  // namespace qcofr
