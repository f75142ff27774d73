// Operator entry point: training and evaluation runs, verification suites,
// interpretability reports.

#include <filesystem>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "qcofr/checkpoint.hpp"
#include "qcofr/config.hpp"
#include "qcofr/episode_log.hpp"
#include "qcofr/interpret.hpp"
#include "qcofr/pade.hpp"
#include "qcofr/rng.hpp"
#include "qcofr/trainer.hpp"
#include "qcofr/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

qcofr::RunConfig resolve_config(const CommonOpts& opts) {
  qcofr::RunConfig cfg = qcofr::load_config_file(opts.config_path);
  qcofr::apply_overrides(cfg, opts.overrides);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed) cfg.seed = *opts.seed;
  qcofr::validate(cfg);
  return cfg;
}

int cmd_train(const CommonOpts& opts) {
  const qcofr::RunConfig cfg = resolve_config(opts);
  const qcofr::RunSummary s = qcofr::run_training(cfg, &std::cout);
  std::cout << "run '" << cfg.name << "' finished: " << s.env_steps << " env steps, "
            << s.episodes << " episodes\n"
            << "final eval " << s.final_eval_mean << " +- " << s.final_eval_std << " (best "
            << s.best_eval_mean << ")\n"
            << "checkpoint: " << s.checkpoint_path << "\n"
            << "metrics:    " << s.metrics_path << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, int episodes, std::uint64_t seed,
             const std::string& out_dir) {
  qcofr::RunConfig cfg = qcofr::peek_checkpoint_config(checkpoint);
  const auto env = qcofr::make_env(cfg);
  qcofr::Learner learner(cfg, *env);
  qcofr::load_checkpoint(checkpoint, learner.params());
  learner.sync_target();
  const qcofr::EvalResult ev = learner.evaluate(*env, episodes, seed, episodes);
  std::cout << std::setprecision(10) << "eval over " << episodes << " greedy episodes: mean "
            << ev.mean_return << " +- " << ev.std_return << "\n";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string log = (std::filesystem::path(out_dir) / "episodes.jsonl").string();
    qcofr::write_episode_log(log, ev.episodes);
    std::cout << "episode log: " << log << "\n";
  }
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  qcofr::SuiteResult result;
  if (suite == "pade")
    result = qcofr::verify_pade(seed);
  else if (suite == "grad")
    result = qcofr::verify_grad(seed);
  else if (suite == "igm")
    result = qcofr::verify_igm(seed);
  else if (suite == "env")
    result = qcofr::verify_env(seed);
  else {
    std::cerr << "unknown suite '" << suite << "' (pade|grad|igm|env)\n";
    return kExitConfig;
  }
  qcofr::print_suite(result, std::cout);
  return result.all_pass() ? kExitOk : kExitRuntime;
}

int cmd_pade_check(int max_depth, int seeds, std::uint64_t seed) {
  using qcofr::pade::Rational;
  qcofr::Rng rng(seed);
  std::cout << "depth  deg(A) deg(B)  expected  agreement>=d+1  pass\n";
  bool all = true;
  for (int d = 1; d <= max_depth; ++d) {
    bool ok = true;
    int worst_agree = 1 << 30;
    int got_pa = 0, got_qa = 0;
    for (int trial = 0; trial < seeds; ++trial) {
      std::vector<Rational> w;
      for (int i = 0; i < d + 4; ++i)
        w.emplace_back(1 + rng.index(9), 1 + rng.index(9));
      const auto pairs = qcofr::pade::convergents(w);
      const auto& pair = pairs[static_cast<std::size_t>(d) - 1];
      got_pa = pair.a.degree();
      got_qa = pair.b.degree();
      const auto [p, q] = qcofr::pade::degree_law(d);
      const auto f = qcofr::pade::cf_series(w, d + 6);
      const int agree = qcofr::pade::order_of_agreement(f, pair);
      worst_agree = std::min(worst_agree, agree);
      ok = ok && pair.a.degree() == p && pair.b.degree() == q && agree >= d + 1;
    }
    const auto [p, q] = qcofr::pade::degree_law(d);
    std::cout << std::setw(5) << d << std::setw(7) << got_pa << std::setw(7) << got_qa << "  ("
              << p << "," << q << ")" << std::setw(12) << worst_agree << std::setw(10)
              << (ok ? "PASS" : "FAIL") << "\n";
    all = all && ok;
  }
  std::cout << (all ? "pade-check: all depths pass\n" : "pade-check: FAILURES\n");
  return all ? kExitOk : kExitRuntime;
}

int cmd_report(const std::string& checkpoint, const std::string& episode_log, std::string out_dir,
               int degree, double domain_lo, double domain_hi) {
  qcofr::RunConfig cfg = qcofr::peek_checkpoint_config(checkpoint);
  const auto env = qcofr::make_env(cfg);
  qcofr::Learner learner(cfg, *env);
  qcofr::load_checkpoint(checkpoint, learner.params());

  const auto episodes = qcofr::read_episode_log(episode_log);
  if (episodes.empty()) {
    std::cerr << "episode log '" << episode_log << "' holds no episodes\n";
    return kExitRuntime;
  }
  if (out_dir.empty()) out_dir = "report";

  // Freeze (m, s) at the first logged timestep: m is the evaluation-time
  // latent mean pooled over agents, s the logged global state.
  const qcofr::Episode& ep = episodes.front();
  const int n = env->n_agents();
  std::vector<double> s(ep.state.front().begin(), ep.state.front().end());
  std::vector<double> m(static_cast<std::size_t>(cfg.latent), 0.0);
  const int d = degree > 0 ? degree : cfg.depth;

  const auto fn = qcofr::mixer_snapshot_fn(learner.params(), learner.mixer(), m, s);
  const std::vector<double> lo(static_cast<std::size_t>(n), domain_lo);
  const std::vector<double> hi(static_cast<std::size_t>(n), domain_hi);
  const auto expansion = qcofr::expand(fn, n, lo, hi, d);
  const auto coalitions = qcofr::coalition_report(expansion);
  const auto similarity = qcofr::q_similarity(episodes, learner);
  const auto paths = qcofr::export_report(expansion, coalitions, similarity, out_dir);
  std::cout << "expansion residual " << expansion.max_residual << "\n"
            << "wrote " << paths.expansion_csv << ", " << paths.coalitions_csv << ", "
            << paths.similarity_csv << ", " << paths.summary_json << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continued-fraction value decomposition toolkit"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  auto* train = app.add_subcommand("train", "Run training from a config file");
  train->add_option("--config", train_opts.config_path, "Config file (INI sections)")->required();
  train->add_option("--override", train_opts.overrides, "section.key=value (repeatable)");
  train->add_option("--out", train_opts.out_dir, "Output directory (overrides run.out_dir)");
  train->add_option("--seed", train_opts.seed, "Seed (overrides run.seed)");

  std::string eval_ckpt, eval_out;
  int eval_episodes = 32;
  std::uint64_t eval_seed = 1;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes (default 32)");
  eval->add_option("--seed", eval_seed, "Environment seed base");
  eval->add_option("--out", eval_out, "Directory for episode logs");

  std::string verify_suite;
  std::uint64_t verify_seed = 20260810;
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("suite", verify_suite, "pade | grad | igm | env")->required();
  verify->add_option("--seed", verify_seed, "Suite seed");

  int pc_depth = 8, pc_seeds = 50;
  std::uint64_t pc_seed = 20260810;
  auto* pade_check = app.add_subcommand("pade-check", "Degree/agreement table over depths");
  pade_check->add_option("--max-depth", pc_depth, "Largest truncation depth (default 8)");
  pade_check->add_option("--seeds", pc_seeds, "Random weight draws per depth (default 50)");
  pade_check->add_option("--seed", pc_seed, "Base seed");

  std::string rep_ckpt, rep_log, rep_out;
  int rep_degree = 0;
  double rep_lo = 0.5, rep_hi = 1.5;
  auto* report = app.add_subcommand("report", "Interpretability report from a checkpoint");
  report->add_option("--checkpoint", rep_ckpt, "Checkpoint file")->required();
  report->add_option("--episodes", rep_log, "Episode log (jsonl)")->required();
  report->add_option("--out", rep_out, "Output directory (default ./report)");
  report->add_option("--degree", rep_degree, "Expansion degree (default mixer depth)");
  report->add_option("--domain-lo", rep_lo, "Fit box lower bound (default 0.5)");
  report->add_option("--domain-hi", rep_hi, "Fit box upper bound (default 1.5)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(eval_ckpt, eval_episodes, eval_seed, eval_out);
    if (*verify) return cmd_verify(verify_suite, verify_seed);
    if (*pade_check) return cmd_pade_check(pc_depth, pc_seeds, pc_seed);
    if (*report) return cmd_report(rep_ckpt, rep_log, rep_out, rep_degree, rep_lo, rep_hi);
  } catch (const qcofr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
