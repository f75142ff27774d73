#include <benchmark/benchmark.h>

#include "qcofr/lbf.hpp"
#include "qcofr/mixer.hpp"
#include "qcofr/tape.hpp"
#include "qcofr/trainer.hpp"

using namespace qcofr;

static void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> a(static_cast<std::size_t>(n) * n), b(a.size()), c(a.size());
  Rng rng(1);
  for (double& v : a) v = rng.gauss();
  for (double& v : b) v = rng.gauss();
  for (auto _ : state) {
    kernels::matmul_nn(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128);

static void BM_AgentForwardBatch(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  ParamStore store;
  Rng rng(2);
  const AgentNet net = AgentNet::create(store, {136, 6, 64}, rng);
  std::vector<double> x(static_cast<std::size_t>(rows) * 136), h(static_cast<std::size_t>(rows) * 64, 0.0);
  std::vector<double> q(static_cast<std::size_t>(rows) * 6), hn(h.size());
  for (double& v : x) v = rng.gauss();
  AgentScratch scratch;
  for (auto _ : state) {
    agent_forward(store, net, x.data(), rows, h.data(), q.data(), hn.data(), scratch);
    benchmark::DoNotOptimize(q.data());
  }
}
BENCHMARK(BM_AgentForwardBatch)->Arg(2)->Arg(64);

static void BM_MixerForward(benchmark::State& state) {
  MixerConfig cfg;
  cfg.n_agents = 4;
  cfg.ladders = 4;
  cfg.depth = 2;
  cfg.latent = 32;
  cfg.state_width = 24;
  ParamStore store;
  Rng rng(3);
  const MixerNet net = MixerNet::create(store, cfg, rng);
  const int rows = 32;
  std::vector<double> q(static_cast<std::size_t>(rows) * 4), m(static_cast<std::size_t>(rows) * 32),
      s(static_cast<std::size_t>(rows) * 24), out(rows);
  for (double& v : q) v = rng.uniform(0.2, 1.8);
  for (double& v : m) v = rng.gauss();
  for (double& v : s) v = rng.gauss();
  MixerScratch scratch;
  for (auto _ : state) {
    mixer_forward(store, net, q.data(), m.data(), s.data(), rows, out.data(), scratch);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MixerForward);

static void BM_LbfStep(benchmark::State& state) {
  LbfConfig cfg;
  cfg.agent_levels = {1, 1, 1};
  cfg.food_levels = {1, 2, 1};
  LbfState st = lbf_reset(cfg, 7);
  Rng rng(11);
  for (auto _ : state) {
    std::vector<int> actions = {rng.index(6), rng.index(6), rng.index(6)};
    auto out = lbf_step(cfg, st, actions);
    benchmark::DoNotOptimize(out);
    if (out.done) st = lbf_reset(cfg, rng.next_u64());
  }
}
BENCHMARK(BM_LbfStep);

static void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg;
  cfg.env_type = "lbf";
  cfg.env_width = 6;
  cfg.env_height = 6;
  cfg.agent_levels = {1, 1};
  cfg.food_levels = {1, 1};
  cfg.hidden = 32;
  cfg.latent = 16;
  cfg.batch = 32;
  const auto env = make_env(cfg);
  Learner learner(cfg, *env);
  Rng rng(5);
  std::vector<Episode> eps;
  for (int i = 0; i < 32; ++i)
    eps.push_back(learner.collect_episode(*env, rng.next_u64(), 1.0, rng));
  std::vector<const Episode*> batch;
  for (const auto& e : eps) batch.push_back(&e);
  for (auto _ : state) {
    auto metrics = learner.train_step(batch);
    benchmark::DoNotOptimize(metrics);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
