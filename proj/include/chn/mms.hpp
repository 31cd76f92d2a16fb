#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "chn/config.hpp"
#include "chn/model.hpp"
#include "chn/solver.hpp"

namespace chn {

/// A smooth manufactured solution on the unit interval used for order
/// verification.  The phase field matches its boundary value -1 exactly, the
/// nutrient matches its (space-constant) boundary datum, and the chemical
/// potential is defined so the potential relation holds with no forcing.
/// Forcing terms for the two evolution equations are derived in closed form.
///
///   phi(x,t)   = -1 + a(t) sin(pi x),        a(t) = 0.4 exp(-t/4)
///   sigma(x,t) = b(t) (1 - 0.5 sin(pi x)),   b(t) = 0.5 (1 + t/2)
///   mu(x,t)    = (g/e) psi'(phi) + g e pi^2 a sin(pi x) - chi sigma
///
/// The volume fraction stays in [0, 0.2], so the clamped interpolant h is in
/// its smooth linear regime, and the quartic potential's split is exact.
struct ManufacturedSolution {
  ModelParams params;  // gamma, eps, chi, eta, lambda_*, kappa enter the forcing

  static double a(double t) { return 0.4 * std::exp(-t / 4.0); }
  static double adot(double t) { return -0.1 * std::exp(-t / 4.0); }
  static double b(double t) { return 0.5 * (1.0 + 0.5 * t); }
  static double bdot(double /*t*/) { return 0.25; }

  double phi(double x, double t) const { return -1.0 + a(t) * std::sin(M_PI * x); }
  double sigma(double x, double t) const {
    return b(t) * (1.0 - 0.5 * std::sin(M_PI * x));
  }

  double mu(double x, double t) const {
    const double p = phi(x, t);
    const double ge = params.gamma * params.eps;
    return (params.gamma / params.eps) * (4.0 * p * p * p - 4.0 * p) +
           ge * M_PI * M_PI * a(t) * std::sin(M_PI * x) - params.chi * sigma(x, t);
  }

  /// Residual forcing of the phase-field equation:
  ///   f_phi = d_t phi - lap mu - (lambda_p sigma - lambda_a) h(phi).
  double f_phi(double x, double t) const {
    const double s = std::sin(M_PI * x);
    const double c = std::cos(M_PI * x);
    const double at = a(t);
    const double bt = b(t);
    const double p = -1.0 + at * s;
    const double pi2 = M_PI * M_PI;
    const double ge = params.gamma * params.eps;
    const double goe = params.gamma / params.eps;
    // lap of (g/e) psi'(phi): psi'' phi_xx + psi''' phi_x^2 with
    // psi'(y) = 4y^3 - 4y.
    const double lap_psi_part =
        goe * ((12.0 * p * p - 4.0) * (-at * pi2 * s) + 24.0 * p * pi2 * at * at * c * c);
    const double lap_mu = lap_psi_part - ge * pi2 * pi2 * at * s -
                          params.chi * 0.5 * bt * pi2 * s;
    const double h = 0.5 * at * s;  // (1 + phi)/2, clamp inactive
    const double source = (params.lambda_p * sigma(x, t) - params.lambda_a) * h;
    return adot(t) * s - lap_mu - source;
  }

  /// Residual forcing of the nutrient equation:
  ///   f_sigma = kappa d_t sigma - div(D (grad sigma - eta grad phi))
  ///             + lambda_c sigma h(phi),  with D = 1.
  double f_sigma(double x, double t) const {
    const double s = std::sin(M_PI * x);
    const double at = a(t);
    const double bt = b(t);
    const double pi2 = M_PI * M_PI;
    const double lap_sigma = 0.5 * bt * pi2 * s;
    const double lap_phi = -at * pi2 * s;
    const double h = 0.5 * at * s;
    return params.kappa * bdot(t) * (1.0 - 0.5 * s) - (lap_sigma - params.eta * lap_phi) +
           params.lambda_c * sigma(x, t) * h;
  }

  Forcing forcing() const {
    ManufacturedSolution ms = *this;
    Forcing f;
    f.phi_eq = [ms](double x, double /*y*/, double t) { return ms.f_phi(x, t); };
    f.sigma_eq = [ms](double x, double /*y*/, double t) { return ms.f_sigma(x, t); };
    return f;
  }

  std::vector<double> sample_phi(const Grid& g, double t) const {
    std::vector<double> v(g.size());
    for (int i = 0; i < g.nx; ++i) v[i] = phi(g.x(i), t);
    return v;
  }
  std::vector<double> sample_sigma(const Grid& g, double t) const {
    std::vector<double> v(g.size());
    for (int i = 0; i < g.nx; ++i) v[i] = sigma(g.x(i), t);
    return v;
  }
  std::vector<double> sample_mu(const Grid& g, double t) const {
    std::vector<double> v(g.size());
    for (int i = 0; i < g.nx; ++i) v[i] = mu(g.x(i), t);
    return v;
  }
};

/// Scenario whose continuous solution is the manufactured one: boundary data
/// taken from the exact fields, initial data at t = 0, default physical
/// parameters, quartic potential.  kappa is 1 (dynamic) or 0 (quasi-static).
inline Scenario mms_scenario(int n, double tau, double t_end, double kappa) {
  Config c;
  c.sections["mode"]["kind"] = kappa == 0.0 ? "quasistatic" : "dynamic";
  c.sections["grid"]["dim"] = "1";
  c.sections["grid"]["nx"] = std::to_string(n);
  c.sections["time"]["tau"] = format_double(tau);
  c.sections["time"]["t_end"] = format_double(t_end);
  c.sections["params"]["kappa"] = format_double(kappa);
  // mu at the boundary reduces to -chi * b(t); sigma there is b(t).
  ModelParams defaults = ModelParams::defaults();
  c.sections["boundary"]["mu_inf"] =
      "(" + format_double(-defaults.chi) + ")*(0.5 + 0.25*t)";
  c.sections["boundary"]["sigma_inf"] = "0.5 + 0.25*t";
  c.sections["boundary"]["sigma_inf_dt"] = "0.25";
  c.sections["initial"]["phi0"] = "-1 + 0.4*sin(pi*x)";
  c.sections["initial"]["sigma0"] = "0.5*(1 - 0.5*sin(pi*x))";
  return build_scenario(c);
}

inline ManufacturedSolution mms_solution(const Scenario& sc) {
  return ManufacturedSolution{sc.params};
}

}  // namespace chn
