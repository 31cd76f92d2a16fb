#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "chn/grid.hpp"

namespace chn {

namespace detail {
inline double polyval(const std::vector<double>& c, double y) {
  double acc = 0.0;
  for (size_t k = c.size(); k-- > 0;) acc = acc * y + c[k];
  return acc;
}
inline std::vector<double> polyder(const std::vector<double>& c) {
  std::vector<double> d;
  for (size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
  return d;
}
}  // namespace detail

/// Smooth polynomial potential split into a convex implicit part and a
/// concave explicit part (monomial coefficients, lowest degree first).
/// Default is the quartic double well (y^2-1)^2 split as (y^4+1) + (-2y^2).
struct RegularPotential {
  std::vector<double> convex_coeffs{1.0, 0.0, 0.0, 0.0, 1.0};  // y^4 + 1
  std::vector<double> concave_coeffs{0.0, 0.0, -2.0};          // -2 y^2
  double growth_p = 3.0;  // |psi'(y)| grows like |y|^p

  static RegularPotential quartic() { return RegularPotential{}; }

  double psi1(double y) const { return detail::polyval(convex_coeffs, y); }
  double psi2(double y) const { return detail::polyval(concave_coeffs, y); }
  double psi(double y) const { return psi1(y) + psi2(y); }
  double psi1_prime(double y) const { return detail::polyval(detail::polyder(convex_coeffs), y); }
  double psi2_prime(double y) const { return detail::polyval(detail::polyder(concave_coeffs), y); }
  double psi_prime(double y) const { return psi1_prime(y) + psi2_prime(y); }
  double psi1_dd(double y) const {
    return detail::polyval(detail::polyder(detail::polyder(convex_coeffs)), y);
  }
  double psi2_dd(double y) const {
    return detail::polyval(detail::polyder(detail::polyder(concave_coeffs)), y);
  }

  /// Sampled structural checks; returns human-readable violations (empty = ok).
  /// Labels reference the assumption tags used by validate_model.
  std::vector<std::string> validate() const {
    std::vector<std::string> bad;
    const int m = 2001;
    double psi_min = std::numeric_limits<double>::infinity();
    double s1dd_min = std::numeric_limits<double>::infinity();
    double growth_worst = 0.0;
    const double s_exp = (growth_p + 1.0) / growth_p;  // |psi'|^s <= k1(1+psi)
    double k1_needed = 0.0;
    for (int i = 0; i < m; ++i) {
      const double y = -10.0 + 20.0 * i / (m - 1);
      psi_min = std::min(psi_min, psi(y));
      s1dd_min = std::min(s1dd_min, psi1_dd(y));
      const double lhs = std::pow(std::abs(psi_prime(y)), s_exp);
      k1_needed = std::max(k1_needed, lhs / (1.0 + psi(y)));
      growth_worst = std::max(growth_worst, lhs);
    }
    if (psi_min < -1e-12) bad.push_back("(A3) potential must be non-negative");
    if (s1dd_min < -1e-12) bad.push_back("(A3) implicit part must be convex");
    if (concave_coeffs.size() > 3)
      bad.push_back("(A3) explicit part must have bounded second derivative (degree <= 2)");
    if (!(k1_needed < std::numeric_limits<double>::infinity()) || !std::isfinite(growth_worst))
      bad.push_back("(A3) growth bound |psi'|^s <= k1 (1 + psi) fails on samples");
    return bad;
  }
};

/// Double-obstacle potential on [lo, hi] handled through its Yosida
/// regularization with parameter n: beta_n(y) = (y - clamp(y, lo, hi)) / n,
/// beta_hat_n(y) = dist(y, [lo,hi])^2 / (2n), plus the smooth concave
/// perturbation Lambda(y) = (1 - y^2)/2 treated explicitly.
struct SingularPotential {
  double lo = -1.0;
  double hi = 1.0;
  double n = 1e-2;  // Yosida parameter in (0, 1]

  double clamp(double y) const { return std::min(hi, std::max(lo, y)); }

  double yosida_beta(double y) const { return (y - clamp(y)) / n; }
  double yosida_beta_prime(double y) const { return (y < lo || y > hi) ? 1.0 / n : 0.0; }
  double yosida_beta_hat(double y) const {
    const double d = y - clamp(y);
    return d * d / (2.0 * n);
  }
  /// The exact obstacle indicator: 0 inside [lo, hi], +infinity outside.
  double beta_hat_exact(double y) const {
    return (y >= lo && y <= hi) ? 0.0 : std::numeric_limits<double>::infinity();
  }

  double lambda(double y) const { return 0.5 * (1.0 - y * y); }
  double lambda_prime(double y) const { return -y; }
  double lambda_dd(double) const { return -1.0; }

  /// Effective regularized potential used for the energy integrand.
  double psi(double y) const { return yosida_beta_hat(y) + lambda(y); }

  std::vector<std::string> validate() const {
    std::vector<std::string> bad;
    if (!(n > 0.0) || n > 1.0) bad.push_back("(S1) Yosida parameter must lie in (0, 1]");
    if (!(lo < hi)) bad.push_back("(S1) obstacle interval must be non-degenerate");
    if (!(lo <= -1.0 && -1.0 <= hi))
      bad.push_back("(S1) obstacle interval must contain -1 (boundary trace)");
    if (!(lo <= 0.0 && 0.0 <= hi)) bad.push_back("(S1) obstacle interval must contain 0");
    const int m = 2001;
    for (int i = 0; i < m; ++i) {
      const double y = lo + (hi - lo) * i / (m - 1);
      if (lambda(y) < -1e-12) {
        bad.push_back("(S2) smooth perturbation must be non-negative on the obstacle interval");
        break;
      }
    }
    return bad;
  }
};

using Potential = std::variant<RegularPotential, SingularPotential>;

inline bool is_singular(const Potential& p) {
  return std::holds_alternative<SingularPotential>(p);
}

/// Energy integrand: Psi(y) for the smooth case, beta_hat_n(y) + Lambda(y)
/// for the regularized obstacle.
inline double psi_energy(const Potential& p, double y) {
  return std::visit([y](const auto& q) { return q.psi(y); }, p);
}

/// Derivative handled implicitly in the chemical-potential equation.
inline double split_implicit_prime(const Potential& p, double y) {
  if (const auto* r = std::get_if<RegularPotential>(&p)) return r->psi1_prime(y);
  return std::get<SingularPotential>(p).yosida_beta(y);
}

/// Its derivative, for the Newton Jacobian.
inline double split_implicit_dd(const Potential& p, double y) {
  if (const auto* r = std::get_if<RegularPotential>(&p)) return r->psi1_dd(y);
  return std::get<SingularPotential>(p).yosida_beta_prime(y);
}

/// Derivative handled explicitly (concave part / smooth perturbation).
inline double split_explicit_prime(const Potential& p, double y) {
  if (const auto* r = std::get_if<RegularPotential>(&p)) return r->psi2_prime(y);
  return std::get<SingularPotential>(p).lambda_prime(y);
}

inline std::vector<std::string> validate_potential(const Potential& p) {
  return std::visit([](const auto& q) { return q.validate(); }, p);
}

}  // namespace chn
