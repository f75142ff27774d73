#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <span>
#include <utility>
#include <vector>

namespace qcofr::pade {

using Rational = boost::multiprecision::cpp_rational;

struct PadeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense polynomial with exact rational coefficients, ascending degree,
// normalized so the leading coefficient is nonzero (degree -1 = zero poly).
class Poly {
 public:
  Poly() = default;
  explicit Poly(std::vector<Rational> coefs) : c_(std::move(coefs)) { normalize(); }
  static Poly constant(Rational v) { return Poly({std::move(v)}); }
  static Poly variable() { return Poly({Rational(0), Rational(1)}); }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  Rational coef(int i) const {
    return (i >= 0 && i < static_cast<int>(c_.size())) ? c_[i] : Rational(0);
  }
  Rational eval(const Rational& x) const;

  Poly operator+(const Poly& o) const;
  Poly operator*(const Poly& o) const;
  Poly scaled(const Rational& s) const;
  // this * z^k
  Poly shifted(int k) const;

 private:
  void normalize() {
    while (!c_.empty() && c_.back() == 0) c_.pop_back();
  }
  std::vector<Rational> c_;
};

// Formal power series truncated at a fixed order K (coefficients 0..K).
// Arithmetic never reads or writes beyond K.
class Series {
 public:
  explicit Series(int order) : c_(static_cast<std::size_t>(order) + 1) {}
  static Series from_poly(const Poly& p, int order);

  int order() const { return static_cast<int>(c_.size()) - 1; }
  const Rational& operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
  Rational& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }

  Series add(const Series& o) const;
  Series sub(const Series& o) const;
  Series mul(const Series& o) const;
  // Multiplicative inverse; requires a nonzero constant term.
  Series inverse() const;
  Series divide(const Series& den) const { return mul(den.inverse()); }

  // Index of the lowest nonzero coefficient, or order()+1 for the zero series.
  int lowest_nonzero() const;

 private:
  void check_same(const Series& o) const {
    if (o.order() != order()) throw PadeError("series: truncation orders differ");
  }
  std::vector<Rational> c_;
};

struct ConvergentPair {
  Poly a, b;
  int k = 0;
};

// A_k, B_k for k = 1..d from the recurrences A_k = w_k A_{k-1} + z A_{k-2},
// B_k = w_k B_{k-1} + z B_{k-2} with (A_-1, A_0, B_-1, B_0) = (1, 0, 0, 1).
// Throws if any weight is zero (B_d(0) = prod w_i must stay nonzero).
std::vector<ConvergentPair> convergents(const std::vector<Rational>& w);

// Theorem degree law: (floor((d+1)/2), floor(d/2)).
std::pair<int, int> degree_law(int d);

// Power series of the continued fraction z/(w1 + z/(w2 + ... + z/w_last)).
Series cf_series(const std::vector<Rational>& w, int order);

// First index at which f and the series expansion of pair.a/pair.b differ;
// f.order()+1 when they agree through the whole truncation.
int order_of_agreement(const Series& f, const ConvergentPair& pair);

// Exact continued-fraction ladder value 1/(w1 q + 1/(w2 q + ... + 1/(wd q)))
// with no pole floor. Throws if an intermediate denominator vanishes.
Rational ladder_exact(const Rational& q, const std::vector<Rational>& w);

// Floor-free double evaluation of the same ladder; throws when an
// intermediate denominator magnitude drops below 1e-9.
double ladder_unfloored(double q, std::span<const double> w);

struct EquivalencePoint {
  double q = 0.0;
  double ladder = 0.0;
  double convergent_form = 0.0;
  double deviation = 0.0;
};

struct EquivalenceReport {
  std::vector<EquivalencePoint> points;
  double max_deviation = 0.0;
  bool pass = false;
};

// Checks, at Q in {2, 3, 5, 10}, that the depth-d ladder equals the
// convergent form Q * A_d(1/Q^2) / B_d(1/Q^2) (the exact image of the ladder
// under the reciprocal-utility substitution) within 1e-10.
EquivalenceReport ladder_series_equivalence(const std::vector<Rational>& w, int d);

}  // namespace qcofr::pade
