#include "qcofr/pade.hpp"

#include <cmath>

namespace qcofr::pade {

Rational Poly::eval(const Rational& x) const {
  Rational acc(0);
  for (int i = degree(); i >= 0; --i) acc = acc * x + c_[static_cast<std::size_t>(i)];
  return acc;
}

Poly Poly::operator+(const Poly& o) const {
  std::vector<Rational> out(std::max(c_.size(), o.c_.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i < c_.size()) out[i] += c_[i];
    if (i < o.c_.size()) out[i] += o.c_[i];
  }
  return Poly(std::move(out));
}

Poly Poly::operator*(const Poly& o) const {
  if (c_.empty() || o.c_.empty()) return Poly();
  std::vector<Rational> out(c_.size() + o.c_.size() - 1);
  for (std::size_t i = 0; i < c_.size(); ++i)
    for (std::size_t j = 0; j < o.c_.size(); ++j) out[i + j] += c_[i] * o.c_[j];
  return Poly(std::move(out));
}

Poly Poly::scaled(const Rational& s) const {
  std::vector<Rational> out = c_;
  for (auto& v : out) v *= s;
  return Poly(std::move(out));
}

Poly Poly::shifted(int k) const {
  if (c_.empty()) return Poly();
  std::vector<Rational> out(c_.size() + static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < c_.size(); ++i) out[i + static_cast<std::size_t>(k)] = c_[i];
  return Poly(std::move(out));
}

Series Series::from_poly(const Poly& p, int order) {
  Series s(order);
  for (int i = 0; i <= order; ++i) s[i] = p.coef(i);
  return s;
}

Series Series::add(const Series& o) const {
  check_same(o);
  Series out(order());
  for (int i = 0; i <= order(); ++i) out[i] = c_[static_cast<std::size_t>(i)] + o[i];
  return out;
}

Series Series::sub(const Series& o) const {
  check_same(o);
  Series out(order());
  for (int i = 0; i <= order(); ++i) out[i] = c_[static_cast<std::size_t>(i)] - o[i];
  return out;
}

Series Series::mul(const Series& o) const {
  check_same(o);
  Series out(order());
  for (int i = 0; i <= order(); ++i) {
    if (c_[static_cast<std::size_t>(i)] == 0) continue;
    for (int j = 0; i + j <= order(); ++j)
      out[i + j] += c_[static_cast<std::size_t>(i)] * o[j];
  }
  return out;
}

Series Series::inverse() const {
  if (c_[0] == 0) throw PadeError("series inverse: zero constant term");
  Series out(order());
  out[0] = Rational(1) / c_[0];
  for (int i = 1; i <= order(); ++i) {
    Rational acc(0);
    for (int j = 1; j <= i; ++j) acc += c_[static_cast<std::size_t>(j)] * out[i - j];
    out[i] = -acc / c_[0];
  }
  return out;
}

int Series::lowest_nonzero() const {
  for (int i = 0; i <= order(); ++i)
    if (c_[static_cast<std::size_t>(i)] != 0) return i;
  return order() + 1;
}

std::vector<ConvergentPair> convergents(const std::vector<Rational>& w) {
  for (const auto& wi : w)
    if (wi == 0) throw PadeError("convergents: zero weight (B_d(0) = prod w_i would vanish)");
  const Poly z = Poly::variable();
  Poly a_prev2 = Poly::constant(Rational(1));  // A_{-1}
  Poly a_prev1;                                // A_0 = 0
  Poly b_prev2;                                // B_{-1} = 0
  Poly b_prev1 = Poly::constant(Rational(1));  // B_0
  std::vector<ConvergentPair> out;
  out.reserve(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    Poly a = a_prev1.scaled(w[k]) + (z * a_prev2);
    Poly b = b_prev1.scaled(w[k]) + (z * b_prev2);
    out.push_back({a, b, static_cast<int>(k) + 1});
    a_prev2 = std::move(a_prev1);
    a_prev1 = std::move(a);
    b_prev2 = std::move(b_prev1);
    b_prev1 = std::move(b);
  }
  return out;
}

std::pair<int, int> degree_law(int d) {
  if (d < 1) throw PadeError("degree_law: d must be >= 1");
  return {(d + 1) / 2, d / 2};
}

Series cf_series(const std::vector<Rational>& w, int order) {
  if (w.empty()) throw PadeError("cf_series: empty weight list");
  for (const auto& wi : w)
    if (wi == 0) throw PadeError("cf_series: zero weight");
  Series z(order);
  if (order >= 1) z[1] = 1;
  // innermost level: z / w_last
  Series g(order);
  g[0] = w.back();
  g = z.mul(g.inverse());
  for (int k = static_cast<int>(w.size()) - 2; k >= 0; --k) {
    Series den = g;
    den[0] += w[static_cast<std::size_t>(k)];
    g = z.mul(den.inverse());
  }
  return g;
}

int order_of_agreement(const Series& f, const ConvergentPair& pair) {
  if (pair.b.coef(0) == 0) throw PadeError("order_of_agreement: B(0) = 0");
  const Series num = Series::from_poly(pair.a, f.order());
  const Series den = Series::from_poly(pair.b, f.order());
  const Series expansion = num.divide(den);
  for (int i = 0; i <= f.order(); ++i)
    if (f[i] != expansion[i]) return i;
  return f.order() + 1;
}

Rational ladder_exact(const Rational& q, const std::vector<Rational>& w) {
  Rational t(0);
  for (int k = static_cast<int>(w.size()) - 1; k >= 0; --k) {
    Rational z = w[static_cast<std::size_t>(k)] * q + t;
    if (z == 0) throw PadeError("ladder_exact: zero denominator at layer " + std::to_string(k));
    t = Rational(1) / z;
  }
  return t;
}

double ladder_unfloored(double q, std::span<const double> w) {
  double t = 0.0;
  for (int k = static_cast<int>(w.size()) - 1; k >= 0; --k) {
    const double z = w[static_cast<std::size_t>(k)] * q + t;
    if (std::fabs(z) < 1e-9)
      throw PadeError("ladder_unfloored: denominator below 1e-9 at layer " + std::to_string(k));
    t = 1.0 / z;
  }
  return t;
}

EquivalenceReport ladder_series_equivalence(const std::vector<Rational>& w, int d) {
  if (static_cast<int>(w.size()) != d)
    throw PadeError("ladder_series_equivalence: weight count != depth");
  const auto pairs = convergents(w);
  const ConvergentPair& pair = pairs.back();
  EquivalenceReport report;
  for (const int qi : {2, 3, 5, 10}) {
    const Rational q(qi);
    // Ladder in the utility variable equals the convergent form evaluated at
    // z^2 = 1/Q^2 with a prefactor of Q.
    const Rational z2 = Rational(1) / (q * q);
    const Rational denom = pair.b.eval(z2);
    if (denom == 0) throw PadeError("ladder_series_equivalence: B_d(1/Q^2) = 0");
    const Rational exact = q * pair.a.eval(z2) / denom;

    std::vector<double> wd(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) wd[i] = static_cast<double>(w[i]);
    EquivalencePoint pt;
    pt.q = static_cast<double>(qi);
    pt.ladder = ladder_unfloored(static_cast<double>(qi), wd);
    pt.convergent_form = static_cast<double>(exact);
    pt.deviation = std::fabs(pt.ladder - pt.convergent_form);
    report.max_deviation = std::max(report.max_deviation, pt.deviation);
    report.points.push_back(pt);
  }
  report.pass = report.max_deviation < 1e-10;
  return report;
}

}  // namespace qcofr::pade
