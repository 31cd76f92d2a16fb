// Expression parsing, configuration resolution, scenario assembly, and the
// labeled assumption checks.

#include <gtest/gtest.h>

#include <cmath>

#include "chn/config.hpp"
#include "chn/model.hpp"

using chn::BoundaryData;
using chn::Config;
using chn::Expr;
using chn::Grid;
using chn::InitialData;
using chn::Mode;
using chn::ModelParams;
using chn::Scenario;

namespace {

bool has_label(const std::vector<std::string>& msgs, const std::string& label) {
  for (const auto& m : msgs)
    if (m.rfind(label, 0) == 0) return true;
  return false;
}

}  // namespace

TEST(Expr, ArithmeticAndPrecedence) {
  const Expr e = Expr::parse("1 + 2*3 - 4/2");
  EXPECT_DOUBLE_EQ(e(0.0), 5.0);
  EXPECT_DOUBLE_EQ(Expr::parse("2^3^1 + 1")(0.0), 9.0);
  EXPECT_DOUBLE_EQ(Expr::parse("-x^2")(3.0), -9.0);
  EXPECT_DOUBLE_EQ(Expr::parse("(1+2)*(3-5)")(0.0), -6.0);
}

TEST(Expr, VariablesFunctionsAndPi) {
  const Expr e = Expr::parse("sin(pi*x) + cos(0)*t");
  EXPECT_NEAR(e(0.5, 0.0, 2.0), 3.0, 1e-15);
  EXPECT_NEAR(Expr::parse("tanh(0)")(0.0), 0.0, 1e-15);
  EXPECT_NEAR(Expr::parse("min(3, max(1, 2))")(0.0), 2.0, 1e-15);
  EXPECT_NEAR(Expr::parse("abs(-4) + sqrt(9)")(0.0), 7.0, 1e-15);
  EXPECT_NEAR(Expr::parse("exp(1)")(0.0), std::exp(1.0), 1e-15);
}

TEST(Expr, SlotBindingAndConstancy) {
  const Expr e = Expr::parse("(1 + phi)/2", {"phi", "", ""});
  EXPECT_DOUBLE_EQ(e(0.0), 0.5);
  EXPECT_TRUE(e.uses_slot(0));
  EXPECT_FALSE(e.uses_slot(2));
  EXPECT_FALSE(e.is_constant());
  EXPECT_TRUE(Expr::parse("pi * 2").is_constant());
}

TEST(Expr, ReportsErrorsWithPosition) {
  EXPECT_THROW(Expr::parse("1 +"), chn::ExprError);
  EXPECT_THROW(Expr::parse("bogus(2)"), chn::ExprError);
  EXPECT_THROW(Expr::parse("sigma"), chn::ExprError);  // unbound identifier
  EXPECT_THROW(Expr::parse("1 2"), chn::ExprError);    // trailing input
  EXPECT_THROW(Expr::parse("(1"), chn::ExprError);
  try {
    Expr::parse("1 2");
    FAIL() << "expected a parse error";
  } catch (const chn::ExprError& err) {
    EXPECT_NE(std::string(err.what()).find("position"), std::string::npos);
  }
}

TEST(Config, ParseSectionsCommentsAndValues) {
  const Config c = Config::parse_string(
      "# leading comment\n[grid]\nnx = 64\n; alt comment\n[params]\nchi = 0.25\n");
  ASSERT_NE(c.find("grid", "nx"), nullptr);
  EXPECT_EQ(*c.find("grid", "nx"), "64");
  EXPECT_EQ(*c.find("params", "chi"), "0.25");
  EXPECT_EQ(c.find("params", "missing"), nullptr);
}

TEST(Config, DuplicateKeyIsAnError) {
  EXPECT_THROW(Config::parse_string("[a]\nx = 1\nx = 2\n"), chn::ConfigError);
}

TEST(Config, SerializeRoundTripsAndHashesAreStable) {
  Config c = Config::parse_string("[b]\nz = 3\n[a]\ny = 2\n");
  const Config again = Config::parse_string(c.serialize());
  EXPECT_EQ(c.serialize(), again.serialize());
  EXPECT_EQ(c.hash_hex(), again.hash_hex());
  Config d = c;
  d.set_dotted("a.y=5");
  EXPECT_NE(c.hash_hex(), d.hash_hex());
  EXPECT_EQ(*d.find("a", "y"), "5");
  EXPECT_THROW(d.set_dotted("noequals"), chn::ConfigError);
  EXPECT_THROW(d.set_dotted("nodot=1"), chn::ConfigError);
}

TEST(Config, ResolveRejectsUnknownKeys) {
  Config bad = Config::parse_string("[params]\nchii = 0.3\n");
  EXPECT_THROW(chn::resolve_config(bad), chn::ConfigError);
  Config bad_sec = Config::parse_string("[paramz]\nchi = 0.3\n");
  EXPECT_THROW(chn::resolve_config(bad_sec), chn::ConfigError);
}

TEST(Scenario, DefaultsAssembleToTheReferenceSetup) {
  const Scenario sc = chn::build_scenario(Config{});
  EXPECT_EQ(sc.mode, Mode::dynamic);
  EXPECT_EQ(sc.grid.dim, 1);
  EXPECT_EQ(sc.grid.nx, 128);
  EXPECT_DOUBLE_EQ(sc.params.kappa, 1.0);
  EXPECT_FALSE(chn::is_singular(sc.potential));
  EXPECT_DOUBLE_EQ(sc.stepping.tau, 1e-3);
  EXPECT_TRUE(sc.boundary.sigma_dt_is_fd());
  // Interpolant coefficient: clamped linear ramp with declared bounds.
  EXPECT_DOUBLE_EQ(sc.params.h(1.0), 1.0);
  EXPECT_DOUBLE_EQ(sc.params.h(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(sc.params.h(3.0), 1.0);
  EXPECT_NEAR(sc.params.h_inf, 1.0, 1e-12);
  EXPECT_NEAR(sc.params.L_h, 0.5, 1e-6);
  EXPECT_FALSE(sc.hash_hex.empty());
}

TEST(Scenario, OverridesAndModeParsing) {
  Config c;
  c.set_dotted("mode.kind=quasistatic");
  c.set_dotted("params.kappa=0");
  c.set_dotted("grid.dim=2");
  c.set_dotted("grid.nx=12");
  c.set_dotted("grid.ny=9");
  c.set_dotted("boundary.sigma_inf_dt=0.25");
  const Scenario sc = chn::build_scenario(c);
  EXPECT_EQ(sc.mode, Mode::quasistatic);
  EXPECT_EQ(sc.grid.dim, 2);
  EXPECT_EQ(sc.grid.size(), 108);
  EXPECT_FALSE(sc.boundary.sigma_dt_is_fd());
  EXPECT_DOUBLE_EQ(sc.boundary.sigma_dt(0.3, 0.0, 1.0), 0.25);
}

TEST(Scenario, RejectsBadStepping) {
  Config c;
  c.set_dotted("time.tau=0");
  EXPECT_THROW(chn::build_scenario(c), chn::ConfigError);
  Config c2;
  c2.set_dotted("time.tau=0.5");
  c2.set_dotted("time.t_end=0.1");
  EXPECT_THROW(chn::build_scenario(c2), chn::ConfigError);
  Config c3;
  c3.set_dotted("grid.dim=3");
  EXPECT_THROW(chn::build_scenario(c3), chn::ConfigError);
  Config c4;
  c4.set_dotted("potential.type=cubic");
  EXPECT_THROW(chn::build_scenario(c4), chn::ConfigError);
  Config c5;
  c5.set_dotted("params.chi=not_a_number");
  EXPECT_THROW(chn::build_scenario(c5), chn::ConfigError);
}

TEST(Model, FiniteDifferenceFallbackForDataDerivative) {
  BoundaryData bd;
  bd.sigma_inf = Expr::parse("t*t");
  EXPECT_TRUE(bd.sigma_dt_is_fd());
  EXPECT_NEAR(bd.sigma_dt(0.0, 0.0, 3.0), 6.0, 1e-6);
  bd.sigma_inf_dt = Expr::parse("2*t");
  EXPECT_FALSE(bd.sigma_dt_is_fd());
  EXPECT_DOUBLE_EQ(bd.sigma_dt(0.0, 0.0, 3.0), 6.0);
  bd.mu_inf = Expr::parse("5*t");
  EXPECT_NEAR(bd.mu_dt(0.0, 0.0, 1.0), 5.0, 1e-6);
}

TEST(Model, SourceTermsFollowTheInterpolant) {
  ModelParams p = ModelParams::defaults();
  p.refresh_bounds();
  const std::vector<double> phi{1.0, -1.0, 0.0};
  const std::vector<double> sigma{2.0, 2.0, 1.0};
  const auto [sp, ss] = chn::eval_sources(p, phi, sigma);
  // h = 1, 0, 1/2; src_phi = (lambda_p sigma - lambda_a) h; src_sigma = -lambda_c sigma h.
  EXPECT_DOUBLE_EQ(sp[0], (0.5 * 2.0 - 0.1) * 1.0);
  EXPECT_DOUBLE_EQ(sp[1], 0.0);
  EXPECT_DOUBLE_EQ(sp[2], (0.5 * 1.0 - 0.1) * 0.5);
  EXPECT_DOUBLE_EQ(ss[0], -2.0);
  EXPECT_DOUBLE_EQ(ss[1], 0.0);
  EXPECT_DOUBLE_EQ(ss[2], -0.5);
  EXPECT_THROW(chn::eval_sources(p, phi, {1.0}), chn::ModelError);
}

TEST(Model, CoefficientSamplingBounds) {
  const auto b = chn::sample_coefficient(chn::CoefficientFn::constant(2.5));
  EXPECT_DOUBLE_EQ(b.lo, 2.5);
  EXPECT_DOUBLE_EQ(b.hi, 2.5);
  EXPECT_DOUBLE_EQ(b.lipschitz, 0.0);
  const auto r = chn::sample_coefficient(
      chn::CoefficientFn::of_expr(Expr::parse("max(0, min(1, (1 + phi)/2))", {"phi", "", ""})));
  EXPECT_DOUBLE_EQ(r.lo, 0.0);
  EXPECT_DOUBLE_EQ(r.hi, 1.0);
  EXPECT_NEAR(r.lipschitz, 0.5, 1e-6);
}

TEST(Model, ValidationLabelsFireOnTheRightViolations) {
  const Scenario base = chn::build_scenario(Config{});
  {
    ModelParams p = base.params;
    p.kappa = -1.0;
    const auto bad =
        chn::validate_model(p, base.potential, base.boundary, base.initial, base.grid, Mode::dynamic);
    EXPECT_TRUE(has_label(bad, "(A1)"));
  }
  {
    ModelParams p = base.params;
    p.D = chn::CoefficientFn::constant(0.0);
    const auto bad =
        chn::validate_model(p, base.potential, base.boundary, base.initial, base.grid, Mode::dynamic);
    EXPECT_TRUE(has_label(bad, "(A2)"));
  }
  {
    // Obstacle potential in a smooth mode.
    chn::SingularPotential s;
    const auto bad = chn::validate_model(base.params, chn::Potential{s}, base.boundary,
                                         base.initial, base.grid, Mode::dynamic);
    EXPECT_TRUE(has_label(bad, "(A3)"));
  }
  {
    // Initial phase field violating the boundary value.
    InitialData init = base.initial;
    init.phi0 = Expr::constant(0.5);
    const auto bad = chn::validate_model(base.params, base.potential, base.boundary, init,
                                         base.grid, Mode::dynamic);
    EXPECT_TRUE(has_label(bad, "(A4)"));
  }
  {
    // Initial phase field outside the obstacle interval, singular mode.
    chn::SingularPotential s;
    InitialData init = base.initial;
    init.phi0 = Expr::parse("-1 + 9*x*(1-x)");  // peaks at 1.25 > hi, trace ok
    const auto bad = chn::validate_model(base.params, chn::Potential{s}, base.boundary, init,
                                         base.grid, Mode::singular);
    EXPECT_TRUE(has_label(bad, "(S3)"));
  }
  // The assembled defaults validate cleanly.
  EXPECT_TRUE(chn::validate_model(base.params, base.potential, base.boundary, base.initial,
                                  base.grid, base.mode)
                  .empty());
}

TEST(Model, ConstantDiffusivityRequirementForPerturbationStudies) {
  ModelParams p = ModelParams::defaults();
  EXPECT_TRUE(chn::validate_ctsdep(p).empty());
  p.D = chn::CoefficientFn::of_expr(Expr::parse("1 + 0.1*phi", {"phi", "", ""}));
  const auto bad = chn::validate_ctsdep(p);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_TRUE(has_label(bad, "(C1)"));
}

TEST(Model, ModeNamesRoundTrip) {
  for (Mode m : {Mode::dynamic, Mode::quasistatic, Mode::singular})
    EXPECT_EQ(chn::mode_from_string(chn::mode_name(m)), m);
  EXPECT_THROW(chn::mode_from_string("static"), chn::ModelError);
}
