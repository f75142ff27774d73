#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace qcofr {

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckRow> rows;

  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return true;
  }
};

// Continued-fraction/Pade property suite: exact degree law, order of
// agreement against deeper truncations, the sign/order structure of
// f*B_k - A_k, B_d(0) = prod w_i, and the ladder/convergent equivalence.
SuiteResult verify_pade(std::uint64_t seed);

// Tape-gradient correctness: every primitive against central differences at
// random points away from kinks, plus the full combined training loss on a
// tiny two-agent configuration.
SuiteResult verify_grad(std::uint64_t seed);

// Argmax consistency of the mixer on 2-agent/3-action games, exhaustively
// enumerated: rate with the nonnegativity transform on (thresholded at 99%)
// and off (reported only).
struct IgmStats {
  int draws = 0;
  int consistent = 0;
  std::vector<std::string> violations;  // capped
  double rate() const { return draws ? static_cast<double>(consistent) / draws : 0.0; }
};
IgmStats igm_consistency(std::uint64_t seed, int draws, bool igm_mode, int ladders, int depth,
                         double delta);
SuiteResult verify_igm(std::uint64_t seed);

// Foraging rule conformance on hand-constructed boards plus determinism.
SuiteResult verify_env(std::uint64_t seed);

// Full-loss gradient check against central differences (frozen noise and
// targets); used by verify_grad and the acceptance suite.
struct FullLossGradReport {
  double max_rel_dev = 0.0;
  int points = 0;
  bool ok = false;
};
FullLossGradReport full_loss_grad_check(std::uint64_t seed, int points, double step, double tol);

void print_suite(const SuiteResult& suite, std::ostream& os);

}  // namespace qcofr
