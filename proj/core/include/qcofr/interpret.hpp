#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qcofr/replay.hpp"
#include "qcofr/trainer.hpp"

namespace qcofr {

// Local polynomial surrogate of a frozen mixer: coefficients of every
// monomial prod Q_i^{p_i} with total degree <= d, fit by least squares on a
// tensor grid over a kink-free box. The surrogate is faithful up to the
// reported residual; the pole floor makes the mixer only piecewise smooth.
struct PolynomialExpansion {
  int n = 0;
  int degree = 0;
  std::vector<std::vector<int>> multi_degrees;
  std::vector<double> coefficients;
  double max_residual = 0.0;
  std::vector<double> lo, hi;
};

using MixerFn = std::function<double(std::span<const double>)>;

// Freezes (m, s) outside; f maps a utility vector to Q_tot.
PolynomialExpansion expand(const MixerFn& f, int n, std::span<const double> lo,
                           std::span<const double> hi, int degree, int points_per_axis = 0);

double eval_expansion(const PolynomialExpansion& ex, std::span<const double> q);

// Mixer snapshot helper: fixes (m, s), applies the learner's mixer.
MixerFn mixer_snapshot_fn(const ParamStore& store, const MixerNet& net, std::vector<double> m,
                          std::vector<double> s);

// Aggregate |coefficient| per exact support set, ranked descending.
struct CoalitionEntry {
  std::vector<int> agents;  // ascending indices
  double weight = 0.0;
};

struct CoalitionReport {
  std::vector<CoalitionEntry> entries;  // ranked, all coalitions
  int top_k = 5;
};

CoalitionReport coalition_report(const PolynomialExpansion& ex, int top_k = 5);

// Mean pairwise cosine similarity of agent Q-value vectors when every agent
// is fed the same observation (each keeps its own hidden state and id
// features). Zero-norm vectors skip that pair/timestep and are counted.
struct SimilarityResult {
  int n = 0;
  std::vector<double> matrix;  // n x n, unit diagonal
  int skipped = 0;
};

SimilarityResult q_similarity(const std::vector<Episode>& episodes, const Learner& learner);

// CSV + JSON emission; creates the directory if needed.
struct ReportPaths {
  std::string expansion_csv, coalitions_csv, similarity_csv, similarity_long_csv, summary_json;
};
ReportPaths export_report(const PolynomialExpansion& ex, const CoalitionReport& rep,
                          const SimilarityResult& sim, const std::string& dir);

// Round-trip readers (also used by the report consumers).
PolynomialExpansion read_expansion_csv(const std::string& path);
std::vector<CoalitionEntry> read_coalitions_csv(const std::string& path);

}  // namespace qcofr
