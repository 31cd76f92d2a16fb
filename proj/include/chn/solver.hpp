#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "chn/grid.hpp"
#include "chn/linalg.hpp"
#include "chn/model.hpp"
#include "chn/potential.hpp"

namespace chn {

struct SolverError : Error {
  using Error::Error;
};

/// Newton failure carrying the last residual norm and iteration count.
struct NewtonError : SolverError {
  enum class Kind { non_convergence, jacobian_mismatch, line_search_stall };
  Kind kind;
  double residual;
  int iters;
  NewtonError(Kind k, double res, int it, const std::string& what)
      : SolverError(what), kind(k), residual(res), iters(it) {}
};

struct NewtonConfig {
  double tol = 1e-10;
  int max_iter = 25;
  int max_halvings = 20;
  bool probe = false;             // directional FD Jacobian check at x0
  double probe_rel_tol = 1e-4;
};

struct NewtonCallbacks {
  std::function<std::vector<double>(const std::vector<double>&)> residual;
  std::function<std::vector<double>(const std::vector<double>&, const std::vector<double>&)>
      jacobian_apply;
  /// Solves J(x) d = rhs; may throw LinearError.
  std::function<std::vector<double>(const std::vector<double>&, const std::vector<double>&)>
      jacobian_solve;
};

struct NewtonResult {
  std::vector<double> x;
  double res_norm = 0.0;
  int iters = 0;
};

/// Damped Newton iteration with the mixed stopping rule
/// ||F(x)|| <= tol (1 + ||F(x0)||) and Armijo-style step halving.
inline NewtonResult newton_solve(const NewtonCallbacks& cb, std::vector<double> x0,
                                 const NewtonConfig& cfg) {
  using detail::nrm2;
  const size_t n = x0.size();
  std::vector<double> F = cb.residual(x0);
  const double f0 = nrm2(F);
  const double target = cfg.tol * (1.0 + f0);

  if (cfg.probe && cb.jacobian_apply) {
    Rng rng(0xA5F0D1CEull);
    std::vector<double> v(n);
    for (auto& e : v) e = rng.sym();
    const double vn = nrm2(v);
    for (auto& e : v) e /= vn;
    double xscale = 0.0;
    for (double e : x0) xscale = std::max(xscale, std::abs(e));
    const double delta = 1e-6 * (1.0 + xscale);
    std::vector<double> xp = x0;
    for (size_t k = 0; k < n; ++k) xp[k] += delta * v[k];
    const std::vector<double> Fp = cb.residual(xp);
    const std::vector<double> Jv = cb.jacobian_apply(x0, v);
    double diff = 0.0, scale = 0.0;
    for (size_t k = 0; k < n; ++k) {
      const double fd = (Fp[k] - F[k]) / delta;
      diff += (Jv[k] - fd) * (Jv[k] - fd);
      scale += Jv[k] * Jv[k] + fd * fd;
    }
    const double rel = std::sqrt(diff) / (std::sqrt(scale) + 1e-300);
    if (rel > cfg.probe_rel_tol)
      throw NewtonError(NewtonError::Kind::jacobian_mismatch, rel, 0,
                        "newton: Jacobian/residual mismatch in directional probe (rel " +
                            std::to_string(rel) + ")");
  }

  std::vector<double> x = std::move(x0);
  double fn = f0;
  const bool trace = std::getenv("CHN_NEWTON_TRACE") != nullptr;
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (trace) std::fprintf(stderr, "newton it=%d fn=%.3e target=%.3e\n", it, fn, target);
    if (fn <= target) {
      return {std::move(x), fn, it};
    }
    const std::vector<double> d = cb.jacobian_solve(x, F);
    double alpha = 1.0;
    bool accepted = false;
    std::vector<double> xt(n), Ft;
    for (int ls = 0; ls <= cfg.max_halvings; ++ls) {
      for (size_t k = 0; k < n; ++k) xt[k] = x[k] - alpha * d[k];
      Ft = cb.residual(xt);
      const double ftn = nrm2(Ft);
      if (ftn <= (1.0 - 1e-4 * alpha) * fn || ftn <= target) {
        x = xt;
        F = std::move(Ft);
        fn = ftn;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw NewtonError(NewtonError::Kind::line_search_stall, fn, it,
                        "newton: line search stalled after 20 halvings (residual " +
                            std::to_string(fn) + ")");
  }
  if (fn <= target) return {std::move(x), fn, cfg.max_iter};
  throw NewtonError(NewtonError::Kind::non_convergence, fn, cfg.max_iter,
                    "newton: no convergence after max iterations (residual " + std::to_string(fn) +
                        ")");
}

/// Homogeneous-trace Laplacian as a CSR operator (symmetric, negative
/// definite).
inline Csr assemble_laplacian(const Grid& g) {
  const double ax = 1.0 / (g.hx * g.hx);
  const double ay = g.dim == 2 ? 1.0 / (g.hy * g.hy) : 0.0;
  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(static_cast<size_t>(g.size()) * 5);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      double diag = -2.0 * ax - (g.dim == 2 ? 2.0 * ay : 0.0);
      if (i > 0) trip.emplace_back(k, g.index(i - 1, j), ax);
      if (i + 1 < g.nx) trip.emplace_back(k, g.index(i + 1, j), ax);
      if (g.dim == 2 && j > 0) trip.emplace_back(k, g.index(i, j - 1), ay);
      if (g.dim == 2 && j + 1 < g.ny) trip.emplace_back(k, g.index(i, j + 1), ay);
      trip.emplace_back(k, k, diag);
    }
  }
  return csr_from_triplets(g.size(), std::move(trip), true);
}

/// Discrete inverse Dirichlet Laplacian: N(f) solves -L N(f) = f over the
/// interior with zero boundary values, so that
/// face_grad_inner(grad N(f), grad u) = l2_inner(f, u) for all zero-trace u.
/// Caches the operator; solves are Jacobi-CG.
class InverseLaplacian {
 public:
  explicit InverseLaplacian(const Grid& g, double tol = 1e-13, int max_iter = 50000)
      : grid_(g), cfg_{tol, max_iter} {
    Csr L = assemble_laplacian(g);
    for (auto& v : L.val) v = -v;  // SPD
    A_ = std::move(L);
    diag_.assign(static_cast<size_t>(A_.n), 0.0);
    for (int i = 0; i < A_.n; ++i)
      for (int p = A_.rowp[i]; p < A_.rowp[i + 1]; ++p)
        if (A_.col[p] == i) diag_[static_cast<size_t>(i)] = A_.val[p];
  }

  std::vector<double> apply(const std::vector<double>& f) const {
    LinearResult r = cg_solve(A_, f, nullptr, cfg_, &diag_);
    if (!r.converged())
      throw LinearError("inverse laplacian: CG failed (relres " + std::to_string(r.relres) + ")");
    return std::move(r.x);
  }

  /// <f, N(g)>_h; symmetric in its arguments up to solver tolerance.
  double inner(const std::vector<double>& f, const std::vector<double>& g) const {
    return l2_inner(grid_, f, apply(g));
  }

  /// ||f||_* = sqrt(<f, N(f)>_h), the discrete dual (H^-1 style) norm.
  double star_norm(const std::vector<double>& f) const {
    return std::sqrt(std::max(0.0, inner(f, f)));
  }

  const Grid& grid() const { return grid_; }

 private:
  Grid grid_;
  Csr A_;
  std::vector<double> diag_;
  LinearConfig cfg_;
};

inline std::vector<double> inverse_dirichlet_laplacian(const Grid& g,
                                                       const std::vector<double>& f) {
  return InverseLaplacian(g).apply(f);
}

inline double star_norm(const Grid& g, const std::vector<double>& f) {
  return InverseLaplacian(g).star_norm(f);
}

/// Discrete Poincare constant of the grid: C_p with ||f|| <= C_p ||grad f||
/// for zero-trace f, measured as sqrt of the largest eigenvalue of the
/// inverse Laplacian via inverse power iteration.
inline double discrete_poincare_constant(const Grid& g) {
  InverseLaplacian N(g);
  std::vector<double> v(static_cast<size_t>(g.size()), 1.0);
  double rho_prev = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> w = N.apply(v);
    const double num = l2_inner(g, v, w);
    const double den = l2_inner(g, v, v);
    const double rho = num / den;
    double wn = l2_norm(g, w);
    for (auto& e : w) e /= wn;
    v = std::move(w);
    if (it > 3 && std::abs(rho - rho_prev) <= 1e-13 * rho) return std::sqrt(rho);
    rho_prev = rho;
  }
  return std::sqrt(rho_prev);
}

/// One time step's coupling strategy: decoupled solves sigma once against the
/// previous phase field; picard re-solves the pair a fixed number of times,
/// feeding the newest phase field into the nutrient coefficients.
enum class Coupling { decoupled, picard };

struct StepperConfig {
  double tau = 1e-3;
  double t_end = 0.5;
  double newton_tol = 1e-10;
  int newton_max_iter = 25;
  double linear_tol = 1e-12;
  int linear_max_iter = 4000;
  Coupling coupling = Coupling::decoupled;
  int picard_iters = 2;
  bool probe_jacobian = true;  // checked once, at the first Newton call of a run
};

/// Optional manufactured-solution forcing added to the two evolution
/// equations, evaluated at the implicit time level.
struct Forcing {
  std::function<double(double, double, double)> phi_eq;
  std::function<double(double, double, double)> sigma_eq;
  bool any() const { return static_cast<bool>(phi_eq) || static_cast<bool>(sigma_eq); }
};

struct State {
  double t = 0.0;
  Field phi, mu, sigma;
  long step_index = 0;
};

/// Implicit-explicit time stepper: backward-Euler nutrient solve, then a
/// convex-split Cahn-Hilliard solve by Newton on the phase-field-reduced
/// residual.  The obstacle potential runs through its Yosida regularization
/// with an automatic continuation ladder in n when Newton strains.
class Stepper {
 public:
  Stepper(const Grid& g, const ModelParams& p, const Potential& pot, const BoundaryData& bd,
          Mode mode, const StepperConfig& cfg, Forcing forcing = {})
      : grid_(g),
        params_(p),
        pot_(pot),
        bd_(bd),
        mode_(mode),
        cfg_(cfg),
        forcing_(std::move(forcing)),
        L0_(assemble_laplacian(g)) {
    if (mode_ == Mode::quasistatic && params_.kappa != 0.0)
      throw SolverError("stepper: quasi-static mode requires kappa = 0");
    L0sq_ = csr_matmul(L0_, L0_);
    Csr I = csr_identity(g.size());
    std::vector<std::vector<int>> maps;
    jac_pattern_ = csr_union_pattern({&I, &L0_, &L0sq_}, maps);
    map_I_ = std::move(maps[0]);
    map_L0_ = std::move(maps[1]);
    map_L0sq_ = std::move(maps[2]);
  }

  const Grid& grid() const { return grid_; }
  const StepperConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }
  Mode mode() const { return mode_; }

  /// Assembles the initial state; mu is reconstructed pointwise from the
  /// chemical-potential relation at t = 0.  In quasi-static mode sigma0 is
  /// replaced by the elliptic solve (the initial datum has no role).
  State initial_state(const InitialData& init) const {
    State s;
    s.t = 0.0;
    s.step_index = 0;
    s.phi = make_phi0(grid_, init);
    s.sigma = make_sigma0(grid_, init, bd_);
    if (params_.kappa == 0.0) s.sigma = quasistatic_sigma(s.phi, 0.0);
    s.mu = mu_field(s.phi, s.phi, s.sigma, 0.0);
    return s;
  }

  /// Advances one step of size tau.
  State step(const State& s) {
    const double t_new = s.t + cfg_.tau;
    const int passes = cfg_.coupling == Coupling::picard ? std::max(1, cfg_.picard_iters) : 1;
    Field phi_slots = s.phi;  // coefficient carrier for the nutrient solve
    Field sigma_new, phi_new;
    for (int pass = 0; pass < passes; ++pass) {
      sigma_new = solve_sigma(phi_slots, s.sigma, t_new);
      phi_new = solve_ch(s.phi, sigma_new, t_new, pass == 0 ? s.phi : phi_slots);
      phi_slots = phi_new;
    }
    State out;
    out.t = t_new;
    out.step_index = s.step_index + 1;
    out.phi = phi_new;
    out.sigma = sigma_new;
    out.mu = mu_field(phi_new, s.phi, sigma_new, t_new);
    return out;
  }

  /// Quasi-static variant; refuses to run with kappa != 0.
  State quasistatic_step(const State& s) {
    if (params_.kappa != 0.0)
      throw SolverError("quasistatic_step: kappa must be 0 (got " +
                        std::to_string(params_.kappa) + ")");
    return step(s);
  }

  /// Elliptic nutrient solve -div(D(phi)(grad sigma - eta grad phi)) +
  /// lambda_c h(phi) sigma = forcing with Dirichlet data at time t.
  Field quasistatic_sigma(const Field& phi, double t) const {
    auto [A, rhs] = assemble_sigma_system(phi, nullptr, t);
    return solve_sigma_system(A, rhs, nullptr, t);
  }

  /// The nutrient operator (for coercivity probes): kappa/tau mass term
  /// included only when sigma_old is provided.
  std::pair<Csr, std::vector<double>> assemble_sigma_system(const Field& phi,
                                                            const Field* sigma_old,
                                                            double t) const {
    const Grid& g = grid_;
    const int n = g.size();
    Field D = make_D_field(phi, t);
    std::vector<std::tuple<int, int, double>> trip;
    trip.reserve(static_cast<size_t>(n) * 5);
    std::vector<double> rhs(static_cast<size_t>(n), 0.0);
    const double ax = 1.0 / (g.hx * g.hx);
    const double ay = g.dim == 2 ? 1.0 / (g.hy * g.hy) : 0.0;
    const double kot = sigma_old ? params_.kappa / cfg_.tau : 0.0;
    auto sigma_bc = [&](double x, double y) { return bd_.sigma(x, y, t); };
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const int k = g.index(i, j);
        double diag = kot + params_.lambda_c * params_.h(phi[k]);
        double b = kot * (sigma_old ? (*sigma_old)[k] : 0.0);
        auto face = [&](int axis, int dir, double a) {
          const double wf = 0.5 * (D[k] + detail::neighbor_value(D, i, j, axis, dir, t));
          diag += wf * a;
          const int ii = axis == 0 ? i + dir : i;
          const int jj = axis == 1 ? j + dir : j;
          if (ii >= 0 && ii < g.nx && jj >= 0 && jj < g.ny) {
            trip.emplace_back(k, g.index(ii, jj), -wf * a);
          } else {
            const double xb = ii < 0 ? 0.0 : (ii >= g.nx ? g.Lx : g.x(ii));
            const double yb = jj < 0 ? 0.0 : (jj >= g.ny ? g.Ly : g.y(jj));
            b += wf * a * sigma_bc(xb, yb);
          }
        };
        face(0, -1, ax);
        face(0, +1, ax);
        if (g.dim == 2) {
          face(1, -1, ay);
          face(1, +1, ay);
        }
        trip.emplace_back(k, k, diag);
        rhs[static_cast<size_t>(k)] = b;
      }
    }
    // explicit active-transport flux: + eta * (-div(D grad phi)) moved to rhs
    if (params_.eta != 0.0) {
      const auto divDphi = div_weighted_flux(D, phi, phi, 0.0, t);
      for (int k = 0; k < n; ++k) rhs[static_cast<size_t>(k)] -= params_.eta * divDphi[static_cast<size_t>(k)];
    }
    if (forcing_.sigma_eq) {
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          rhs[static_cast<size_t>(g.index(i, j))] += forcing_.sigma_eq(g.x(i), g.y(j), t);
    }
    Csr A = csr_from_triplets(n, std::move(trip), true);
    return {std::move(A), std::move(rhs)};
  }

  /// Residuals of the three discrete equations at an accepted step (decoupled
  /// reading), each evolution equation in its tau-scaled update form — the
  /// same normalization the solvers enforce — measured in the quadrature
  /// norm; returns the largest of the three.
  double weak_residual(const State& s_old, const State& s_new) const {
    const double t_new = s_new.t;
    const double tau = cfg_.tau;
    const Grid& g = grid_;
    const int n = g.size();
    // nutrient equation
    Field D = make_D_field(s_old.phi, t_new);
    Field sig = s_new.sigma;
    const auto flux = div_weighted_flux(D, sig, s_old.phi, params_.eta, t_new);
    std::vector<double> r(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      double v = params_.kappa * (s_new.sigma[k] - s_old.sigma[k]) -
                 tau * (flux[static_cast<size_t>(k)] -
                        params_.lambda_c * s_new.sigma[k] * params_.h(s_old.phi[k]));
      r[static_cast<size_t>(k)] = v;
    }
    if (forcing_.sigma_eq)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          r[static_cast<size_t>(g.index(i, j))] -= tau * forcing_.sigma_eq(g.x(i), g.y(j), t_new);
    double worst = l2_norm(g, r);
    // phase-field equation
    const auto lap_mu = laplacian(s_new.mu, t_new);
    for (int k = 0; k < n; ++k) {
      double v = s_new.phi[k] - s_old.phi[k] -
                 tau * (lap_mu[static_cast<size_t>(k)] +
                        (params_.lambda_p * s_new.sigma[k] - params_.lambda_a) *
                            params_.h(s_old.phi[k]));
      r[static_cast<size_t>(k)] = v;
    }
    if (forcing_.phi_eq)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          r[static_cast<size_t>(g.index(i, j))] -= tau * forcing_.phi_eq(g.x(i), g.y(j), t_new);
    worst = std::max(worst, l2_norm(g, r));
    // chemical-potential relation
    const Field mu_check = mu_field(s_new.phi, s_old.phi, s_new.sigma, t_new);
    for (int k = 0; k < n; ++k) r[static_cast<size_t>(k)] = s_new.mu[k] - mu_check[k];
    worst = std::max(worst, l2_norm(g, r));
    return worst;
  }

 private:
  Grid grid_;
  ModelParams params_;
  Potential pot_;
  BoundaryData bd_;
  Mode mode_;
  StepperConfig cfg_;
  Forcing forcing_;
  Csr L0_, L0sq_, jac_pattern_;
  std::vector<int> map_I_, map_L0_, map_L0sq_;
  mutable bool probed_ = false;

  Field make_D_field(const Field& phi, double /*t*/) const {
    Field D(grid_, 0.0, DirichletTrace::constant(params_.D(-1.0)));
    for (int k = 0; k < grid_.size(); ++k) {
      const double v = params_.D(phi[k]);
      if (!(v > 0.0) || !std::isfinite(v))
        throw SolverError("stepper: diffusivity left its positive range during the run");
      D[k] = v;
    }
    return D;
  }

  Field solve_sigma(const Field& phi_slots, const Field& sigma_old, double t_new) const {
    if (params_.kappa == 0.0) return quasistatic_sigma(phi_slots, t_new);
    auto [A, rhs] = assemble_sigma_system(phi_slots, &sigma_old, t_new);
    return solve_sigma_system(A, rhs, &sigma_old, t_new);
  }

  Field solve_sigma_system(const Csr& A, const std::vector<double>& rhs, const Field* warm,
                           double /*t_new*/) const {
    std::vector<double> diag(static_cast<size_t>(A.n), 1.0);
    for (int i = 0; i < A.n; ++i)
      for (int p = A.rowp[i]; p < A.rowp[i + 1]; ++p)
        if (A.col[p] == i) diag[static_cast<size_t>(i)] = A.val[p];
    LinearConfig lc{cfg_.linear_tol, cfg_.linear_max_iter};
    LinearResult r = cg_solve(A, rhs, warm ? &warm->v : nullptr, lc, &diag);
    if (!r.converged())
      throw LinearError("nutrient solve: CG " +
                        std::string(r.status == LinearStatus::breakdown ? "breakdown" : "stall") +
                        " (relres " + std::to_string(r.relres) + ")");
    return Field(grid_, std::move(r.x), trace_from_expr(bd_.sigma_inf));
  }

  /// Chemical potential of the split scheme: implicit part at phi_new,
  /// explicit part at phi_old.
  Field mu_field(const Field& phi_new, const Field& phi_old, const Field& sigma, double t) const {
    return mu_field_with(pot_, phi_new, phi_old, sigma, t);
  }

  Field mu_field_with(const Potential& pot, const Field& phi_new, const Field& phi_old,
                      const Field& sigma, double t) const {
    const double ge = params_.gamma / params_.eps;
    const auto lap_phi = laplacian(phi_new, t);
    Field mu(grid_, 0.0, trace_from_expr(bd_.mu_inf));
    for (int k = 0; k < grid_.size(); ++k) {
      mu[k] = ge * (split_implicit_prime(pot, phi_new[k]) + split_explicit_prime(pot, phi_old[k])) -
              params_.gamma * params_.eps * lap_phi[static_cast<size_t>(k)] -
              params_.chi * sigma[k];
    }
    return mu;
  }

  Field solve_ch(const Field& phi_old, const Field& sigma_new, double t_new, const Field& warm) {
    if (const auto* sp = std::get_if<SingularPotential>(&pot_)) {
      // fast path at the target n, continuation ladder on failure
      try {
        return solve_ch_with(pot_, phi_old, sigma_new, t_new, warm);
      } catch (const NewtonError& e) {
        if (e.kind == NewtonError::Kind::jacobian_mismatch) throw;
      } catch (const LinearError&) {
      }
      SingularPotential relaxed = *sp;
      Field guess = warm;
      double nc = std::max(sp->n, 0.1);
      for (;;) {
        relaxed.n = nc;
        guess = solve_ch_with(Potential(relaxed), phi_old, sigma_new, t_new, guess);
        if (nc == sp->n) return guess;
        nc = std::max(0.5 * nc, sp->n);
      }
    }
    return solve_ch_with(pot_, phi_old, sigma_new, t_new, warm);
  }

  Field solve_ch_with(const Potential& pot, const Field& phi_old, const Field& sigma_new,
                      double t_new, const Field& warm) {
    const Grid& g = grid_;
    const int n = g.size();
    const double ge = params_.gamma / params_.eps;
    const double gk = params_.gamma * params_.eps;
    std::vector<double> src(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
      src[static_cast<size_t>(k)] =
          (params_.lambda_p * sigma_new[k] - params_.lambda_a) * params_.h(phi_old[k]);
    if (forcing_.phi_eq)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          src[static_cast<size_t>(g.index(i, j))] += forcing_.phi_eq(g.x(i), g.y(j), t_new);

    // The update equation is solved in tau-scaled form,
    //   F(x) = x - phi_old - tau (lap mu(x) + src),
    // whose entries stay O(phi): the unscaled form carries h^-4-amplified
    // roundoff that can sit above a tight relative tolerance.
    NewtonCallbacks cb;
    cb.residual = [&, this](const std::vector<double>& x) {
      Field phx(g, x, phi_trace());
      const Field mu = mu_field_with(pot, phx, phi_old, sigma_new, t_new);
      const auto lap_mu = laplacian(mu, t_new);
      std::vector<double> F(x.size());
      for (int k = 0; k < n; ++k)
        F[static_cast<size_t>(k)] =
            x[static_cast<size_t>(k)] - phi_old[k] -
            cfg_.tau * (lap_mu[static_cast<size_t>(k)] + src[static_cast<size_t>(k)]);
      return F;
    };
    cb.jacobian_apply = [&, this](const std::vector<double>& x, const std::vector<double>& v) {
      // J v = v - tau L0 (ge psi_imp''(x) v - gk L0 v)
      std::vector<double> inner(v.size());
      const auto L0v = L0_.apply(v);
      for (int k = 0; k < n; ++k)
        inner[static_cast<size_t>(k)] =
            ge * split_implicit_dd(pot, x[static_cast<size_t>(k)]) * v[static_cast<size_t>(k)] -
            gk * L0v[static_cast<size_t>(k)];
      auto out = L0_.apply(inner);
      for (int k = 0; k < n; ++k)
        out[static_cast<size_t>(k)] =
            v[static_cast<size_t>(k)] - cfg_.tau * out[static_cast<size_t>(k)];
      return out;
    };
    cb.jacobian_solve = [&, this](const std::vector<double>& x, const std::vector<double>& rhs) {
      fill_jacobian(pot, x, ge, gk);
      const Ilu0 M = Ilu0::factor(jac_pattern_);
      LinearConfig lc{cfg_.linear_tol, cfg_.linear_max_iter};
      LinearResult r = bicgstab_solve(jac_pattern_, rhs, nullptr, lc, &M);
      if (!r.converged())
        throw LinearError("phase-field solve: Krylov " +
                          std::string(r.status == LinearStatus::breakdown ? "breakdown" : "stall") +
                          " (relres " + std::to_string(r.relres) + ")");
      return std::move(r.x);
    };

    NewtonConfig ncfg;
    ncfg.tol = cfg_.newton_tol;
    ncfg.max_iter = cfg_.newton_max_iter;
    ncfg.probe = cfg_.probe_jacobian && !probed_;
    probed_ = true;
    NewtonResult res = newton_solve(cb, warm.v, ncfg);
    last_newton_iters_ = res.iters;
    return Field(g, std::move(res.x), phi_trace());
  }

  /// J = I - tau (ge L0 diag(c) - gk L0^2) assembled on the cached union
  /// pattern; c = psi_imp''(x).  Matches the tau-scaled residual.
  void fill_jacobian(const Potential& pot, const std::vector<double>& x, double ge,
                     double gk) {
    std::fill(jac_pattern_.val.begin(), jac_pattern_.val.end(), 0.0);
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i)
      jac_pattern_.val[static_cast<size_t>(map_I_[static_cast<size_t>(i)])] += 1.0;
    for (int i = 0; i < n; ++i) {
      for (int p = L0_.rowp[i]; p < L0_.rowp[i + 1]; ++p) {
        const double c = split_implicit_dd(pot, x[static_cast<size_t>(L0_.col[p])]);
        jac_pattern_.val[static_cast<size_t>(map_L0_[static_cast<size_t>(p)])] -=
            cfg_.tau * ge * L0_.val[static_cast<size_t>(p)] * c;
      }
    }
    for (size_t p = 0; p < L0sq_.val.size(); ++p)
      jac_pattern_.val[static_cast<size_t>(map_L0sq_[p])] += cfg_.tau * gk * L0sq_.val[p];
  }

 public:
  int last_newton_iters() const { return last_newton_iters_; }

 private:
  mutable int last_newton_iters_ = 0;
};

}  // namespace chn
