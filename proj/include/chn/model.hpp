#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chn/expr.hpp"
#include "chn/grid.hpp"
#include "chn/potential.hpp"

namespace chn {

struct ModelError : Error {
  using Error::Error;
};

/// Time evolution variants: dynamic (kappa > 0), quasi-static nutrient
/// (kappa = 0), and the obstacle-potential run (kappa >= 0).
enum class Mode { dynamic, quasistatic, singular };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::dynamic: return "dynamic";
    case Mode::quasistatic: return "quasistatic";
    case Mode::singular: return "singular";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "dynamic") return Mode::dynamic;
  if (s == "quasistatic") return Mode::quasistatic;
  if (s == "singular") return Mode::singular;
  throw ModelError("unknown mode '" + s + "' (expected dynamic|quasistatic|singular)");
}

/// Scalar coefficient function of the order parameter: either a constant or
/// an expression in the variable 'phi'.
struct CoefficientFn {
  bool is_const = true;
  double c = 1.0;
  Expr expr;

  double operator()(double y) const { return is_const ? c : expr(y); }

  static CoefficientFn constant(double v) {
    CoefficientFn f;
    f.is_const = true;
    f.c = v;
    return f;
  }

  static CoefficientFn of_expr(Expr e) {
    CoefficientFn f;
    f.is_const = false;
    f.expr = std::move(e);
    return f;
  }
};

/// min/max of a coefficient function sampled over [-10, 10], plus the largest
/// finite-difference slope (Lipschitz estimate).
struct CoefficientBounds {
  double lo = 0.0;
  double hi = 0.0;
  double lipschitz = 0.0;
};

inline CoefficientBounds sample_coefficient(const CoefficientFn& f) {
  CoefficientBounds b;
  b.lo = std::numeric_limits<double>::infinity();
  b.hi = -std::numeric_limits<double>::infinity();
  const int m = 4001;
  double prev = 0.0;
  const double step = 20.0 / (m - 1);
  for (int i = 0; i < m; ++i) {
    const double y = -10.0 + step * i;
    const double v = f(y);
    b.lo = std::min(b.lo, v);
    b.hi = std::max(b.hi, v);
    if (i > 0) b.lipschitz = std::max(b.lipschitz, std::abs(v - prev) / step);
    prev = v;
  }
  return b;
}

/// All scalar model parameters plus the two coefficient functions with their
/// sampled bounds.  Defaults describe the reference tumor scenario.
struct ModelParams {
  double gamma = 0.1;     // surface tension scale
  double eps = 0.1;       // interface thickness
  double kappa = 1.0;     // nutrient time scale (0 = quasi-static)
  double lambda_p = 0.5;  // proliferation
  double lambda_a = 0.1;  // apoptosis
  double lambda_c = 1.0;  // consumption
  double chi = 0.3;       // chemotaxis
  double eta = 0.2;       // active transport
  CoefficientFn D = CoefficientFn::constant(1.0);
  double D0 = 1.0;
  double D1 = 1.0;
  CoefficientFn h;  // set by defaults(): clamp((1+y)/2, 0, 1)
  double h_inf = 1.0;
  double L_h = 0.5;

  static ModelParams defaults() {
    ModelParams p;
    p.h = CoefficientFn::of_expr(Expr::parse("max(0, min(1, (1 + phi)/2))", {"phi", "", ""}));
    return p;
  }

  /// Re-derives D/h bounds by sampling (call after replacing either function).
  void refresh_bounds() {
    const auto bd = sample_coefficient(D);
    D0 = bd.lo;
    D1 = bd.hi;
    const auto bh = sample_coefficient(h);
    h_inf = bh.hi;
    L_h = bh.lipschitz;
  }
};

/// Space-time data functions defined on the whole box (their boundary values
/// supply the Dirichlet data).  sigma_inf_dt is analytic when given; otherwise
/// a centered difference with step fd_dt_step is used and flagged.
struct BoundaryData {
  Expr mu_inf = Expr::constant(0.0);
  Expr sigma_inf = Expr::constant(1.0);
  std::optional<Expr> sigma_inf_dt;
  double fd_dt_step = 1e-5;

  double mu(double x, double y, double t) const { return mu_inf(x, y, t); }
  double sigma(double x, double y, double t) const { return sigma_inf(x, y, t); }

  bool sigma_dt_is_fd() const { return !sigma_inf_dt.has_value(); }

  double sigma_dt(double x, double y, double t) const {
    if (sigma_inf_dt) return (*sigma_inf_dt)(x, y, t);
    return (sigma_inf(x, y, t + fd_dt_step) - sigma_inf(x, y, t - fd_dt_step)) /
           (2.0 * fd_dt_step);
  }

  /// d/dt of mu_inf; always centered-difference (no analytic slot).
  double mu_dt(double x, double y, double t) const {
    return (mu_inf(x, y, t + fd_dt_step) - mu_inf(x, y, t - fd_dt_step)) / (2.0 * fd_dt_step);
  }
};

struct InitialData {
  Expr phi0 = Expr::constant(-1.0);
  Expr sigma0 = Expr::constant(0.0);
};

inline DirichletTrace trace_from_expr(const Expr& e) {
  return DirichletTrace::of([e](double x, double y, double t) { return e(x, y, t); });
}

/// The phase field carries the constant trace -1 everywhere.
inline DirichletTrace phi_trace() { return DirichletTrace::constant(-1.0); }

inline Field make_phi0(const Grid& g, const InitialData& init) {
  const Expr e = init.phi0;
  return sample_field(g, [&e](double x, double y) { return e(x, y, 0.0); }, phi_trace());
}

inline Field make_sigma0(const Grid& g, const InitialData& init, const BoundaryData& bd) {
  const Expr e = init.sigma0;
  return sample_field(g, [&e](double x, double y) { return e(x, y, 0.0); },
                      trace_from_expr(bd.sigma_inf));
}

/// Reaction terms: mass source (lambda_p sigma - lambda_a) h(phi) and nutrient
/// consumption -lambda_c sigma h(phi), evaluated nodally.  Affine in sigma for
/// fixed phi.
inline std::pair<std::vector<double>, std::vector<double>> eval_sources(
    const ModelParams& p, const std::vector<double>& phi, const std::vector<double>& sigma) {
  if (phi.size() != sigma.size()) throw ModelError("eval_sources: size mismatch");
  std::vector<double> src_phi(phi.size()), src_sigma(phi.size());
  for (size_t k = 0; k < phi.size(); ++k) {
    const double hk = p.h(phi[k]);
    src_phi[k] = (p.lambda_p * sigma[k] - p.lambda_a) * hk;
    src_sigma[k] = -p.lambda_c * sigma[k] * hk;
  }
  return {std::move(src_phi), std::move(src_sigma)};
}

/// Checks the standing assumptions against the assembled scenario and returns
/// one label-prefixed message per violation (empty = valid).
inline std::vector<std::string> validate_model(const ModelParams& p, const Potential& pot,
                                               const BoundaryData& bd, const InitialData& init,
                                               const Grid& grid, Mode mode) {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };

  // (A1) sign conditions
  check(p.lambda_p >= 0.0, "(A1) lambda_p must be non-negative");
  check(p.lambda_a >= 0.0, "(A1) lambda_a must be non-negative");
  check(p.lambda_c >= 0.0, "(A1) lambda_c must be non-negative");
  check(p.chi >= 0.0, "(A1) chi must be non-negative");
  check(p.eta >= 0.0, "(A1) eta must be non-negative");
  check(p.gamma > 0.0, "(A1) gamma must be positive");
  check(p.eps > 0.0, "(A1) eps must be positive");
  switch (mode) {
    case Mode::dynamic:
      check(p.kappa > 0.0, "(A1) dynamic mode requires kappa > 0");
      break;
    case Mode::quasistatic:
      check(p.kappa == 0.0, "(A1) quasistatic mode requires kappa = 0");
      break;
    case Mode::singular:
      check(p.kappa >= 0.0, "(A1) singular mode requires kappa >= 0");
      break;
  }

  // (A2) coefficient bounds on samples
  const auto bD = sample_coefficient(p.D);
  check(bD.lo > 0.0, "(A2) D must be bounded below by a positive constant");
  check(std::isfinite(bD.hi), "(A2) D must be bounded above");
  const auto bh = sample_coefficient(p.h);
  check(bh.lo >= -1e-12, "(A2) h must be non-negative");
  check(std::isfinite(bh.hi), "(A2) h must be bounded");
  check(bh.hi <= p.h_inf + 1e-9, "(A2) h exceeds its declared bound h_inf");

  // (A3)/(S1)/(S2) potential structure + mode consistency
  if (mode == Mode::singular)
    check(is_singular(pot), "(S1) singular mode requires the obstacle potential");
  else
    check(!is_singular(pot), "(A3) smooth modes require the polynomial potential");
  for (auto& v : validate_potential(pot)) bad.push_back(v);

  // (C2) declared Lipschitz bound of h
  check(bh.lipschitz <= p.L_h + 1e-6, "(C2) h exceeds its declared Lipschitz constant");

  // (C3) psi' growth: polynomial degree of psi' at most 5
  if (const auto* r = std::get_if<RegularPotential>(&pot)) {
    const size_t deg1 = r->convex_coeffs.empty() ? 0 : r->convex_coeffs.size() - 1;
    const size_t deg2 = r->concave_coeffs.empty() ? 0 : r->concave_coeffs.size() - 1;
    check(std::max(deg1, deg2) <= 6,
          "(C3) psi' must grow at most like |s|^5 (polynomial degree <= 6)");
  }

  // (A4) initial/boundary data: finite energy and trace compatibility
  bool phi0_finite = true, psi0_finite = true, sigma0_finite = true;
  double phi0_min = std::numeric_limits<double>::infinity();
  double phi0_max = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const double v = init.phi0(grid.x(i), grid.y(j), 0.0);
      const double s = init.sigma0(grid.x(i), grid.y(j), 0.0);
      phi0_finite = phi0_finite && std::isfinite(v);
      sigma0_finite = sigma0_finite && std::isfinite(s);
      phi0_min = std::min(phi0_min, v);
      phi0_max = std::max(phi0_max, v);
      if (!is_singular(pot)) psi0_finite = psi0_finite && std::isfinite(psi_energy(pot, v));
    }
  }
  check(phi0_finite, "(A4) phi0 must be finite at all nodes");
  check(sigma0_finite, "(A4) sigma0 must be finite at all nodes");
  check(psi0_finite, "(A4) psi(phi0) must be integrable (finite at all nodes)");

  double trace_gap = 0.0;
  auto probe_boundary = [&](double x, double y) {
    trace_gap = std::max(trace_gap, std::abs(init.phi0(x, y, 0.0) + 1.0));
  };
  if (grid.dim == 1) {
    probe_boundary(0.0, 0.0);
    probe_boundary(grid.Lx, 0.0);
  } else {
    for (int i = 0; i < grid.nx; ++i) {
      probe_boundary(grid.x(i), 0.0);
      probe_boundary(grid.x(i), grid.Ly);
    }
    for (int j = 0; j < grid.ny; ++j) {
      probe_boundary(0.0, grid.y(j));
      probe_boundary(grid.Lx, grid.y(j));
    }
  }
  check(trace_gap <= 1e-2, "(A4) phi0 must meet the boundary value -1 (trace gap too large)");

  bool data_finite = true;
  for (double t : {0.0, 0.5, 1.0}) {
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        data_finite = data_finite && std::isfinite(bd.mu(grid.x(i), grid.y(j), t)) &&
                      std::isfinite(bd.sigma(grid.x(i), grid.y(j), t)) &&
                      std::isfinite(bd.sigma_dt(grid.x(i), grid.y(j), t));
      }
    }
  }
  check(data_finite, "(A4) boundary data must evaluate to finite values");

  // (S3) obstacle: initial phase field inside the interval
  if (const auto* s = std::get_if<SingularPotential>(&pot)) {
    check(phi0_min >= s->lo - 1e-12 && phi0_max <= s->hi + 1e-12,
          "(S3) phi0 must lie inside the obstacle interval");
  }
  return bad;
}

/// Extra requirement of the data-perturbation stability experiments (not
/// needed for plain simulation): the diffusivity must be a constant.
inline std::vector<std::string> validate_ctsdep(const ModelParams& p) {
  std::vector<std::string> bad;
  if (!p.D.is_const)
    bad.push_back("(C1) continuous-dependence experiments require a constant diffusivity D");
  return bad;
}

}  // namespace chn
