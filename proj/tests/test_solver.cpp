// Newton iteration, the inverse-Laplacian norm machinery, and the coupled
// time stepper: exactness oracles where closed forms exist, structural
// inequalities elsewhere.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "chn/config.hpp"
#include "chn/solver.hpp"

using chn::Config;
using chn::DirichletTrace;
using chn::Field;
using chn::Grid;
using chn::Scenario;
using chn::State;
using chn::Stepper;

namespace {

chn::NewtonCallbacks cube_root_system() {
  // F(x) = x^3 - 8, scalar system embedded in a 1-vector.
  chn::NewtonCallbacks cb;
  cb.residual = [](const std::vector<double>& x) {
    return std::vector<double>{x[0] * x[0] * x[0] - 8.0};
  };
  cb.jacobian_apply = [](const std::vector<double>& x, const std::vector<double>& v) {
    return std::vector<double>{3.0 * x[0] * x[0] * v[0]};
  };
  cb.jacobian_solve = [](const std::vector<double>& x, const std::vector<double>& rhs) {
    return std::vector<double>{rhs[0] / (3.0 * x[0] * x[0])};
  };
  return cb;
}

Scenario scenario_with_sets(const std::vector<std::string>& sets) {
  Config c;
  for (const auto& s : sets) c.set_dotted(s);
  return chn::build_scenario(c);
}

Stepper stepper_of(const Scenario& sc) {
  return Stepper(sc.grid, sc.params, sc.potential, sc.boundary, sc.mode, sc.stepping);
}

}  // namespace

TEST(Newton, SolvesScalarCubic) {
  const auto res = chn::newton_solve(cube_root_system(), {3.0}, {1e-12, 25, 20, true, 1e-4});
  EXPECT_NEAR(res.x[0], 2.0, 1e-10);
  EXPECT_LE(res.iters, 8);
}

TEST(Newton, ProbeCatchesInconsistentJacobian) {
  chn::NewtonCallbacks cb = cube_root_system();
  cb.jacobian_apply = [](const std::vector<double>& x, const std::vector<double>& v) {
    return std::vector<double>{7.0 * x[0] * v[0]};  // wrong linearization
  };
  try {
    chn::newton_solve(cb, {3.0}, {1e-12, 25, 20, true, 1e-4});
    FAIL() << "expected a probe failure";
  } catch (const chn::NewtonError& e) {
    EXPECT_EQ(e.kind, chn::NewtonError::Kind::jacobian_mismatch);
  }
}

TEST(Newton, ThrowsOnIterationBudgetExhaustion) {
  try {
    chn::newton_solve(cube_root_system(), {50.0}, {1e-14, 2, 20, false, 1e-4});
    FAIL() << "expected non-convergence";
  } catch (const chn::NewtonError& e) {
    EXPECT_EQ(e.kind, chn::NewtonError::Kind::non_convergence);
    EXPECT_GT(e.residual, 0.0);
  }
}

TEST(AssembledLaplacian, MatchesMatrixFreeOperatorOnZeroTrace) {
  const Grid g = Grid::box(6, 7, 1.0, 1.2);
  const chn::Csr L = chn::assemble_laplacian(g);
  chn::Rng rng(41);
  Field f(g, 0.0, DirichletTrace::constant(0.0));
  for (int k = 0; k < g.size(); ++k) f[k] = rng.sym();
  const auto want = chn::laplacian(f, 0.0);
  const auto got = L.apply(f.v);
  for (int k = 0; k < g.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-11);
  EXPECT_LT(chn::symmetry_probe(L), 1e-13);
}

TEST(InverseLaplacian, ClosedFormForConstantLoad) {
  // -u'' = 1 with zero boundary values has u(x) = x(1-x)/2; the three-point
  // stencil is exact on quadratics, so the discrete solution equals the nodal
  // samples and <1, u>_h has a closed form.
  const int n = 47;
  const Grid g = Grid::line(n, 1.0);
  const chn::InverseLaplacian N(g);
  const std::vector<double> ones(static_cast<size_t>(n), 1.0);
  const auto u = N.apply(ones);
  for (int i = 0; i < n; ++i) {
    const double x = g.x(i);
    EXPECT_NEAR(u[static_cast<size_t>(i)], 0.5 * x * (1.0 - x), 1e-11);
  }
  const double np1 = n + 1.0;
  const double exact_inner =
      n / (4.0 * np1) - n * (2.0 * n + 1.0) / (12.0 * np1 * np1);
  EXPECT_NEAR(N.star_norm(ones), std::sqrt(exact_inner), 1e-11);
  EXPECT_NEAR(std::sqrt(exact_inner), std::sqrt(1.0 / 12.0), 2e-3);
}

TEST(InverseLaplacian, InnerProductIsSymmetric) {
  const Grid g = Grid::box(8, 6, 1.0, 1.0);
  const chn::InverseLaplacian N(g);
  chn::Rng rng(42);
  std::vector<double> f(static_cast<size_t>(g.size())), h(static_cast<size_t>(g.size()));
  for (auto& e : f) e = rng.sym();
  for (auto& e : h) e = rng.sym();
  const double fg = N.inner(f, h);
  const double gf = N.inner(h, f);
  EXPECT_NEAR(fg, gf, 1e-10 * (1.0 + std::abs(fg)));
}

TEST(InverseLaplacian, InterpolationInequalityHolds) {
  // ||g||^2 <= ||g||_* ||grad g|| for zero-trace fields: equality chain via
  // the inverse operator makes this a discrete Cauchy-Schwarz fact.
  const Grid g = Grid::line(33, 1.0);
  const chn::InverseLaplacian N(g);
  chn::Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    Field f(g, 0.0, DirichletTrace::constant(0.0));
    for (int k = 0; k < g.size(); ++k) f[k] = rng.sym();
    const double l2sq = chn::l2_inner(g, f.v, f.v);
    const double star = N.star_norm(f.v);
    const double grad = std::sqrt(chn::gradient_sq_integral(f, 0.0));
    EXPECT_LE(l2sq, star * grad * (1.0 + 1e-9));
  }
}

TEST(PoincareConstant, MatchesTheSpectralClosedForm) {
  // The sharp discrete constant is h / (2 sin(pi h / 2)); it converges to the
  // continuum value 1/pi from above.
  const int n = 31;
  const Grid g = Grid::line(n, 1.0);
  const double h = g.hx;
  const double exact = h / (2.0 * std::sin(M_PI * h / 2.0));
  const double measured = chn::discrete_poincare_constant(g);
  EXPECT_NEAR(measured, exact, 1e-7 * exact);
  EXPECT_NEAR(measured, 1.0 / M_PI, 0.05 / M_PI);
}

TEST(PoincareConstant, BoundsRandomZeroTraceFields) {
  const Grid g = Grid::box(9, 8, 1.0, 1.0);
  const double cp = chn::discrete_poincare_constant(g);
  chn::Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    Field f(g, 0.0, DirichletTrace::constant(0.0));
    for (int k = 0; k < g.size(); ++k) f[k] = rng.sym();
    const double l2 = std::sqrt(chn::l2_inner(g, f.v, f.v));
    const double grad = std::sqrt(chn::gradient_sq_integral(f, 0.0));
    EXPECT_LE(l2, cp * grad * (1.0 + 1e-10));
  }
}

TEST(Stepper, QuasistaticModeRequiresZeroKappa) {
  const Scenario sc = scenario_with_sets({"grid.nx=16"});
  EXPECT_THROW(Stepper(sc.grid, sc.params, sc.potential, sc.boundary, chn::Mode::quasistatic,
                       sc.stepping),
               chn::SolverError);
  Stepper s = stepper_of(sc);
  const State s0 = s.initial_state(sc.initial);
  EXPECT_THROW(s.quasistatic_step(s0), chn::SolverError);
}

TEST(Stepper, InitialChemicalPotentialFollowsThePointwiseRelation) {
  const Scenario sc = scenario_with_sets({"grid.nx=24"});
  Stepper s = stepper_of(sc);
  const State s0 = s.initial_state(sc.initial);
  const auto& p = sc.params;
  const auto lap = chn::laplacian(s0.phi, 0.0);
  for (int k = 0; k < sc.grid.size(); ++k) {
    const double phi = s0.phi[k];
    const double psi_prime = chn::split_implicit_prime(sc.potential, phi) +
                             chn::split_explicit_prime(sc.potential, phi);
    const double want =
        (p.gamma / p.eps) * psi_prime - p.gamma * p.eps * lap[k] - p.chi * s0.sigma[k];
    EXPECT_NEAR(s0.mu[k], want, 1e-10 * (1.0 + std::abs(want)));
  }
}

TEST(Stepper, QuasistaticNutrientSatisfiesTheEllipticBalance) {
  const Scenario sc = scenario_with_sets(
      {"mode.kind=quasistatic", "params.kappa=0", "grid.nx=32", "time.tau=1e-3"});
  Stepper s = stepper_of(sc);
  const State s0 = s.initial_state(sc.initial);
  // Rebuild the matrix-free operator and check the solved field annihilates it:
  // div(D(phi)(grad sigma - eta grad phi)) = lambda_c h(phi) sigma.
  const auto& p = sc.params;
  Field w(sc.grid, 0.0, DirichletTrace::of([&p](double, double, double) { return p.D(-1.0); }));
  for (int k = 0; k < sc.grid.size(); ++k) w[k] = p.D(s0.phi[k]);
  const auto flux = chn::div_weighted_flux(w, s0.sigma, s0.phi, p.eta, 0.0);
  for (int k = 0; k < sc.grid.size(); ++k) {
    const double balance = flux[k] - p.lambda_c * p.h(s0.phi[k]) * s0.sigma[k];
    EXPECT_NEAR(balance, 0.0, 1e-6);
  }
}

TEST(Stepper, SourceFreeEnergyDecaysMonotonically) {
  // With all couplings off the scheme is a pure gradient flow; the convex
  // splitting makes every step dissipative regardless of tau.
  const Scenario sc = scenario_with_sets(
      {"grid.nx=31", "params.lambda_p=0", "params.lambda_a=0", "params.lambda_c=0",
       "params.chi=0", "params.eta=0", "boundary.mu_inf=0", "boundary.sigma_inf=1",
       "time.tau=5e-3"});
  Stepper s = stepper_of(sc);
  State state = s.initial_state(sc.initial);
  auto energy = [&](const State& st) {
    double psi_sum = 0.0;
    for (int k = 0; k < sc.grid.size(); ++k)
      psi_sum += chn::psi_energy(sc.potential, st.phi[k]);
    psi_sum *= sc.grid.cell_volume();
    return (sc.params.gamma / sc.params.eps) * psi_sum +
           0.5 * sc.params.gamma * sc.params.eps * chn::gradient_sq_integral(st.phi, st.t);
  };
  double prev = energy(state);
  for (int k = 0; k < 40; ++k) {
    state = s.step(state);
    const double now = energy(state);
    EXPECT_LE(now, prev + 1e-12 * (1.0 + std::abs(prev)));
    prev = now;
  }
}

TEST(Stepper, WeakResidualIsSmallAfterEachStep) {
  const Scenario sc = scenario_with_sets({"grid.nx=48", "time.tau=2e-3"});
  Stepper s = stepper_of(sc);
  State state = s.initial_state(sc.initial);
  for (int k = 0; k < 5; ++k) {
    const State next = s.step(state);
    EXPECT_LE(s.weak_residual(state, next), 1e-8);
    state = next;
  }
}

TEST(Stepper, NewtonStaysCheapOnSmoothStates) {
  const Scenario sc = scenario_with_sets({"grid.nx=64", "time.tau=1e-4"});
  Stepper s = stepper_of(sc);
  State state = s.initial_state(sc.initial);
  for (int k = 0; k < 3; ++k) {
    state = s.step(state);
    EXPECT_LE(s.last_newton_iters(), 6);
  }
}

TEST(Stepper, PicardCouplingConvergesToTheSameRegime) {
  const Scenario dec = scenario_with_sets({"grid.nx=32", "time.tau=1e-3"});
  const Scenario pic = scenario_with_sets(
      {"grid.nx=32", "time.tau=1e-3", "time.coupling=picard", "time.picard_iters=3"});
  Stepper sd = stepper_of(dec);
  Stepper sp = stepper_of(pic);
  State a = sd.initial_state(dec.initial);
  State b = sp.initial_state(pic.initial);
  for (int k = 0; k < 5; ++k) {
    a = sd.step(a);
    b = sp.step(b);
  }
  // Both couplings discretize the same system: states differ at O(tau), not O(1).
  double diff = 0.0, scale = 0.0;
  for (int k = 0; k < dec.grid.size(); ++k) {
    diff = std::max(diff, std::abs(a.phi[k] - b.phi[k]));
    scale = std::max(scale, std::abs(a.phi[k]));
  }
  EXPECT_LT(diff, 0.05 * (1.0 + scale));
  EXPECT_GT(diff, 0.0);  // the couplings are genuinely different schemes
}

TEST(Stepper, ObstaclePenalizationKeepsPhaseNearlyAdmissible) {
  const Scenario sc = scenario_with_sets(
      {"mode.kind=singular", "potential.type=obstacle", "potential.yosida_n=1e-3",
       "grid.nx=48", "time.tau=1e-3"});
  Stepper s = stepper_of(sc);
  State state = s.initial_state(sc.initial);
  for (int k = 0; k < 5; ++k) state = s.step(state);
  double worst = 0.0;
  for (int k = 0; k < sc.grid.size(); ++k)
    worst = std::max(worst, std::max(state.phi[k] - 1.0, -1.0 - state.phi[k]));
  EXPECT_LT(worst, 0.05);  // penetration shrinks with the penalty parameter
}

TEST(Stepper, ForcingEntersTheUpdateEquations)
{
  // A constant forcing in the phase equation shifts phi by tau * f in one
  // step when every other mechanism is switched off and phi0 is flat.
  const Scenario sc = scenario_with_sets(
      {"grid.nx=16", "params.lambda_p=0", "params.lambda_a=0", "params.lambda_c=0",
       "params.chi=0", "params.eta=0", "initial.phi0=-1", "initial.sigma0=1",
       "boundary.sigma_inf=1", "time.tau=1e-3"});
  chn::Forcing forcing;
  forcing.phi_eq = [](double, double, double) { return 2.0; };
  Stepper s(sc.grid, sc.params, sc.potential, sc.boundary, sc.mode, sc.stepping, forcing);
  State state = s.initial_state(sc.initial);
  const State next = s.step(state);
  // phi lifts by roughly tau * f; the fixed boundary value feeds curvature
  // back through the implicit solve, so allow a few percent at the center.
  const int mid = sc.grid.size() / 2;
  EXPECT_NEAR(next.phi[mid] - state.phi[mid], sc.stepping.tau * 2.0, 1e-4);
}
