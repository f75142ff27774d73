#include "qcofr/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qcofr {

namespace {

void enumerate_degrees(int n, int degree, std::vector<int>& cur, int remaining,
                       std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == n) {
    out.push_back(cur);
    return;
  }
  for (int p = 0; p <= remaining; ++p) {
    cur.push_back(p);
    enumerate_degrees(n, degree, cur, remaining - p, out);
    cur.pop_back();
  }
}

double monomial(std::span<const double> q, const std::vector<int>& deg) {
  double v = 1.0;
  for (std::size_t i = 0; i < deg.size(); ++i)
    for (int p = 0; p < deg[i]; ++p) v *= q[i];
  return v;
}

// Householder QR least squares; throws on rank deficiency.
std::vector<double> solve_least_squares(std::vector<double> a, int rows, int cols,
                                        std::vector<double> b) {
  if (rows < cols) throw std::invalid_argument("least squares: fewer samples than coefficients");
  for (int k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (int i = k; i < rows; ++i) norm += a[static_cast<std::size_t>(i) * cols + k] *
                                           a[static_cast<std::size_t>(i) * cols + k];
    norm = std::sqrt(norm);
    if (norm < 1e-12)
      throw std::runtime_error(
          "polynomial fit is rank-deficient; use a larger domain or fewer degrees");
    const double akk = a[static_cast<std::size_t>(k) * cols + k];
    const double alpha = akk > 0.0 ? -norm : norm;
    // v = x - alpha*e_k (stored in place of column k below the diagonal)
    std::vector<double> v(static_cast<std::size_t>(rows - k), 0.0);
    v[0] = akk - alpha;
    for (int i = k + 1; i < rows; ++i)
      v[static_cast<std::size_t>(i - k)] = a[static_cast<std::size_t>(i) * cols + k];
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 < 1e-300) continue;
    for (int j = k; j < cols; ++j) {
      double dot = 0.0;
      for (int i = k; i < rows; ++i)
        dot += v[static_cast<std::size_t>(i - k)] * a[static_cast<std::size_t>(i) * cols + j];
      const double f = 2.0 * dot / vnorm2;
      for (int i = k; i < rows; ++i)
        a[static_cast<std::size_t>(i) * cols + j] -= f * v[static_cast<std::size_t>(i - k)];
    }
    double dotb = 0.0;
    for (int i = k; i < rows; ++i) dotb += v[static_cast<std::size_t>(i - k)] * b[static_cast<std::size_t>(i)];
    const double fb = 2.0 * dotb / vnorm2;
    for (int i = k; i < rows; ++i) b[static_cast<std::size_t>(i)] -= fb * v[static_cast<std::size_t>(i - k)];
  }
  std::vector<double> x(static_cast<std::size_t>(cols));
  for (int k = cols - 1; k >= 0; --k) {
    double s = b[static_cast<std::size_t>(k)];
    for (int j = k + 1; j < cols; ++j) s -= a[static_cast<std::size_t>(k) * cols + j] * x[static_cast<std::size_t>(j)];
    const double diag = a[static_cast<std::size_t>(k) * cols + k];
    if (std::fabs(diag) < 1e-12)
      throw std::runtime_error(
          "polynomial fit is rank-deficient; use a larger domain or fewer degrees");
    x[static_cast<std::size_t>(k)] = s / diag;
  }
  return x;
}

}  // namespace

PolynomialExpansion expand(const MixerFn& f, int n, std::span<const double> lo,
                           std::span<const double> hi, int degree, int points_per_axis) {
  if (n < 1 || degree < 1) throw std::invalid_argument("expand: need n >= 1, degree >= 1");
  if (static_cast<int>(lo.size()) != n || static_cast<int>(hi.size()) != n)
    throw std::invalid_argument("expand: domain bounds must have one entry per agent");
  const int ppa = points_per_axis > 0 ? points_per_axis : degree + 2;

  PolynomialExpansion ex;
  ex.n = n;
  ex.degree = degree;
  ex.lo.assign(lo.begin(), lo.end());
  ex.hi.assign(hi.begin(), hi.end());
  std::vector<int> cur;
  enumerate_degrees(n, degree, cur, degree, ex.multi_degrees);

  // tensor grid
  std::vector<std::vector<double>> grid;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (;;) {
    std::vector<double> q(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      q[static_cast<std::size_t>(i)] =
          lo[i] + (hi[i] - lo[i]) * (ppa == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (ppa - 1));
    grid.push_back(std::move(q));
    int k = 0;
    while (k < n && ++idx[static_cast<std::size_t>(k)] == ppa) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == n) break;
  }

  const int rows = static_cast<int>(grid.size());
  const int cols = static_cast<int>(ex.multi_degrees.size());
  std::vector<double> a(static_cast<std::size_t>(rows) * cols);
  std::vector<double> b(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c)
      a[static_cast<std::size_t>(r) * cols + c] = monomial(grid[static_cast<std::size_t>(r)], ex.multi_degrees[static_cast<std::size_t>(c)]);
    b[static_cast<std::size_t>(r)] = f(grid[static_cast<std::size_t>(r)]);
  }
  ex.coefficients = solve_least_squares(a, rows, cols, b);

  for (int r = 0; r < rows; ++r) {
    const double pred = eval_expansion(ex, grid[static_cast<std::size_t>(r)]);
    ex.max_residual = std::max(ex.max_residual, std::fabs(pred - b[static_cast<std::size_t>(r)]));
  }
  return ex;
}

double eval_expansion(const PolynomialExpansion& ex, std::span<const double> q) {
  double v = 0.0;
  for (std::size_t c = 0; c < ex.coefficients.size(); ++c)
    v += ex.coefficients[c] * monomial(q, ex.multi_degrees[c]);
  return v;
}

MixerFn mixer_snapshot_fn(const ParamStore& store, const MixerNet& net, std::vector<double> m,
                          std::vector<double> s) {
  return [&store, &net, m = std::move(m), s = std::move(s)](std::span<const double> q) {
    MixerScratch scratch;
    double out = 0.0;
    mixer_forward(store, net, q.data(), m.data(), s.data(), 1, &out, scratch);
    return out;
  };
}

CoalitionReport coalition_report(const PolynomialExpansion& ex, int top_k) {
  std::map<std::vector<int>, double> agg;
  for (std::size_t c = 0; c < ex.coefficients.size(); ++c) {
    std::vector<int> support;
    for (int i = 0; i < ex.n; ++i)
      if (ex.multi_degrees[c][static_cast<std::size_t>(i)] > 0) support.push_back(i);
    if (support.empty()) continue;  // constant term carries no coalition
    agg[support] += std::fabs(ex.coefficients[c]);
  }
  CoalitionReport rep;
  rep.top_k = top_k;
  for (auto& [agents, w] : agg) rep.entries.push_back({agents, w});
  std::stable_sort(rep.entries.begin(), rep.entries.end(),
                   [](const CoalitionEntry& a, const CoalitionEntry& b) {
                     return a.weight > b.weight;
                   });
  return rep;
}

SimilarityResult q_similarity(const std::vector<Episode>& episodes, const Learner& learner) {
  const RunConfig& cfg = learner.config();
  SimilarityResult res;
  if (episodes.empty()) return res;
  const int n = episodes.front().n_agents;
  if (n < 2) throw std::invalid_argument("q_similarity: need at least 2 agents");
  res.n = n;
  res.matrix.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> counts(static_cast<std::size_t>(n) * n, 0.0);

  const int U = static_cast<int>(episodes.front().avail.front().size()) / n;
  for (const Episode& ep : episodes) {
    std::vector<double> hidden(static_cast<std::size_t>(n) * cfg.hidden, 0.0);
    std::vector<int> last(static_cast<std::size_t>(n), -1);
    std::vector<double> q;
    for (int t = 0; t < ep.length; ++t) {
      // Probe with a shared observation (agent 0's) and shared last action,
      // against each agent's own hidden state.
      std::vector<std::vector<double>> common(
          static_cast<std::size_t>(n),
          std::vector<double>(ep.obs[static_cast<std::size_t>(t)][0].begin(),
                              ep.obs[static_cast<std::size_t>(t)][0].end()));
      std::vector<int> common_last(static_cast<std::size_t>(n), last[0]);
      std::vector<double> probe_hidden = hidden;
      learner.agents_step(learner.params(), common, common_last, probe_hidden, q);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double* qi = q.data() + static_cast<std::size_t>(i) * U;
          const double* qj = q.data() + static_cast<std::size_t>(j) * U;
          double nij = 0.0, ni = 0.0, nj = 0.0;
          for (int a = 0; a < U; ++a) {
            nij += qi[a] * qj[a];
            ni += qi[a] * qi[a];
            nj += qj[a] * qj[a];
          }
          if (ni <= 0.0 || nj <= 0.0) {
            ++res.skipped;
            continue;
          }
          const double cosine = nij / std::sqrt(ni * nj);
          res.matrix[static_cast<std::size_t>(i) * n + j] += cosine;
          counts[static_cast<std::size_t>(i) * n + j] += 1.0;
        }
      }
      // Advance the true hidden states on the logged trajectory.
      std::vector<std::vector<double>> own;
      for (int i = 0; i < n; ++i)
        own.emplace_back(ep.obs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].begin(),
                         ep.obs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].end());
      learner.agents_step(learner.params(), own, last, hidden, q);
      last = ep.actions[static_cast<std::size_t>(t)];
    }
  }
  for (int i = 0; i < n; ++i) {
    res.matrix[static_cast<std::size_t>(i) * n + i] = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double c = counts[static_cast<std::size_t>(i) * n + j];
      const double v = c > 0.0 ? res.matrix[static_cast<std::size_t>(i) * n + j] / c : 0.0;
      res.matrix[static_cast<std::size_t>(i) * n + j] = v;
      res.matrix[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  return res;
}

namespace {

std::string degrees_key(const std::vector<int>& deg) {
  std::string s;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(deg[i]);
  }
  return s;
}

std::string agents_key(const std::vector<int>& agents) {
  std::string s;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (i) s += "+";
    s += std::to_string(agents[i] + 1);  // 1-based in reports
  }
  return s;
}

}  // namespace

ReportPaths export_report(const PolynomialExpansion& ex, const CoalitionReport& rep,
                          const SimilarityResult& sim, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::exists(dir))
    throw std::runtime_error("export_report: cannot create directory '" + dir + "'");
  ReportPaths paths;
  paths.expansion_csv = (fs::path(dir) / "expansion.csv").string();
  paths.coalitions_csv = (fs::path(dir) / "coalitions.csv").string();
  paths.similarity_csv = (fs::path(dir) / "similarity.csv").string();
  paths.similarity_long_csv = (fs::path(dir) / "similarity_long.csv").string();
  paths.summary_json = (fs::path(dir) / "report.json").string();

  const auto open = [](const std::string& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("export_report: cannot write '" + p + "'");
    f.precision(17);
    return f;
  };

  {
    auto f = open(paths.expansion_csv);
    f << "multi_degree,coefficient\n";
    for (std::size_t c = 0; c < ex.coefficients.size(); ++c)
      f << degrees_key(ex.multi_degrees[c]) << "," << ex.coefficients[c] << "\n";
  }
  {
    auto f = open(paths.coalitions_csv);
    f << "rank,coalition,weight\n";
    for (std::size_t i = 0; i < rep.entries.size(); ++i)
      f << (i + 1) << "," << agents_key(rep.entries[i].agents) << "," << rep.entries[i].weight
        << "\n";
  }
  {
    auto f = open(paths.similarity_csv);
    for (int i = 0; i < sim.n; ++i) {
      for (int j = 0; j < sim.n; ++j)
        f << sim.matrix[static_cast<std::size_t>(i) * sim.n + j] << (j + 1 < sim.n ? "," : "");
      f << "\n";
    }
  }
  {
    auto f = open(paths.similarity_long_csv);
    f << "agent_i,agent_j,cosine\n";
    for (int i = 0; i < sim.n; ++i)
      for (int j = 0; j < sim.n; ++j)
        f << (i + 1) << "," << (j + 1) << "," << sim.matrix[static_cast<std::size_t>(i) * sim.n + j]
          << "\n";
  }
  {
    nlohmann::json js;
    js["degree"] = ex.degree;
    js["n_agents"] = ex.n;
    js["max_residual"] = ex.max_residual;
    js["domain_lo"] = ex.lo;
    js["domain_hi"] = ex.hi;
    auto& coals = js["top_coalitions"] = nlohmann::json::array();
    for (std::size_t i = 0; i < rep.entries.size() && i < static_cast<std::size_t>(rep.top_k);
         ++i)
      coals.push_back({{"coalition", agents_key(rep.entries[i].agents)},
                       {"weight", rep.entries[i].weight}});
    js["similarity_skipped"] = sim.skipped;
    auto f = open(paths.summary_json);
    f << js.dump(2) << "\n";
  }
  return paths;
}

PolynomialExpansion read_expansion_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  PolynomialExpansion ex;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    std::vector<int> deg;
    std::stringstream ss(line.substr(0, comma));
    std::string part;
    while (std::getline(ss, part, ';')) deg.push_back(std::stoi(part));
    ex.multi_degrees.push_back(deg);
    ex.coefficients.push_back(std::stod(line.substr(comma + 1)));
    ex.n = static_cast<int>(deg.size());
  }
  for (const auto& d : ex.multi_degrees) {
    int s = 0;
    for (int p : d) s += p;
    ex.degree = std::max(ex.degree, s);
  }
  return ex;
}

std::vector<CoalitionEntry> read_coalitions_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<CoalitionEntry> out;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    CoalitionEntry e;
    std::stringstream ss(line.substr(c1 + 1, c2 - c1 - 1));
    std::string part;
    while (std::getline(ss, part, '+')) e.agents.push_back(std::stoi(part) - 1);
    e.weight = std::stod(line.substr(c2 + 1));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace qcofr
