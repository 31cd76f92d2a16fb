#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "chn/config.hpp"
#include "chn/diagnostics.hpp"
#include "chn/solver.hpp"

#define CHN_VERSION "0.1.0"

namespace chn {

struct RunOptions {
  bool store_trajectory = false;  ///< keep every state (initial one included)
};

struct RunResult {
  std::vector<DiagnosticsRecord> records;  ///< one per state, initial first
  std::vector<EnergyBudget> budgets;       ///< one per step
  std::vector<State> trajectory;           ///< filled only when requested
  State final_state;
  StabilityReport stability;
  double chi_used = 1.0;
  double poincare = 0.0;
  long steps = 0;
  double tau = 0.0;
  double t_end_effective = 0.0;
};

/// Number of whole steps covering the requested horizon.
inline long step_count(const StepperConfig& cfg) {
  const long n = std::lround(cfg.t_end / cfg.tau);
  return n < 1 ? 1 : n;
}

/// Runs the scenario to its horizon, collecting diagnostics each step.
inline RunResult run_simulation(const Scenario& sc, const Forcing& forcing = {},
                                const RunOptions& opt = {}) {
  Stepper stepper(sc.grid, sc.params, sc.potential, sc.boundary, sc.mode, sc.stepping,
                  forcing);
  DiagnosticsAccumulator acc(sc.grid, sc.params, sc.potential, sc.boundary, sc.mode);
  RunResult out;
  out.tau = sc.stepping.tau;
  out.steps = step_count(sc.stepping);
  out.t_end_effective = static_cast<double>(out.steps) * out.tau;

  State s = stepper.initial_state(sc.initial);
  out.records.push_back(acc.initial(s));
  if (opt.store_trajectory) out.trajectory.push_back(s);
  for (long k = 0; k < out.steps; ++k) {
    State s_new = stepper.step(s);
    out.records.push_back(acc.after_step(s, s_new, stepper.last_newton_iters()));
    if (opt.store_trajectory) out.trajectory.push_back(s_new);
    s = std::move(s_new);
  }
  out.final_state = s;
  out.budgets = acc.budgets();
  out.stability = acc.stability_report(out.records, out.tau);
  out.chi_used = acc.chi_used();
  out.poincare = acc.poincare_constant_value();
  return out;
}

// ---------------------------------------------------------------------------
// Output files.  All numbers are printed with %.17g so a re-run with the same
// resolved configuration reproduces the files byte for byte.
// ---------------------------------------------------------------------------

namespace detail_io {
inline void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}
}  // namespace detail_io

inline void write_diagnostics_csv(const std::string& path,
                                  const std::vector<DiagnosticsRecord>& recs) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "t,psi_integral,grad_phi_energy,sigma_l2,mu_h1,sigma_h1,energy_lhs,"
        "energy_rhs_bound,identity_residual,star_norm_phi,phi_l2,newton_iters\n";
  for (const auto& r : recs) {
    const double cols[] = {r.t,         r.psi_integral,      r.grad_phi_energy,
                           r.sigma_l2,  r.mu_h1,             r.sigma_h1,
                           r.energy_lhs, r.energy_rhs_bound, r.identity_residual,
                           r.star_norm_phi, r.phi_l2};
    for (double c : cols) {
      detail_io::put(os, c);
      os << ',';
    }
    os << r.newton_iters << '\n';
  }
}

inline void write_budgets_csv(const std::string& path,
                              const std::vector<EnergyBudget>& budgets) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "t_old,t_new,i1a,i1b,i2a,i2b,i3a,i3b,i4,dissipation,lhs,residual,sigma_dt_fd\n";
  for (const auto& b : budgets) {
    const double cols[] = {b.t_old, b.t_new, b.i1a, b.i1b, b.i2a, b.i2b,
                           b.i3a,   b.i3b,   b.i4,  b.dissipation, b.lhs, b.residual};
    for (double c : cols) {
      detail_io::put(os, c);
      os << ',';
    }
    os << (b.sigma_dt_fd ? 1 : 0) << '\n';
  }
}

inline void write_snapshot_csv(const std::string& path, const State& s) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  const Grid& g = s.phi.grid;
  os << (g.dim == 2 ? "x,y,phi,mu,sigma\n" : "x,phi,mu,sigma\n");
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      detail_io::put(os, g.x(i));
      if (g.dim == 2) {
        os << ',';
        detail_io::put(os, g.y(j));
      }
      os << ',';
      detail_io::put(os, s.phi.v[k]);
      os << ',';
      detail_io::put(os, s.mu.v[k]);
      os << ',';
      detail_io::put(os, s.sigma.v[k]);
      os << '\n';
    }
}

/// The manifest is the resolved configuration preceded by comment lines; fed
/// back in as a config file it rebuilds the identical scenario (same hash,
/// byte-identical outputs).  Written before stepping starts so interrupted
/// runs still document themselves.
inline void write_manifest(const std::string& path, const Scenario& sc) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "# chn " << CHN_VERSION << "\n";
  os << "# hash: " << sc.hash_hex << "\n";
  os << "# mode: " << mode_name(sc.mode) << "\n";
  os << "# steps: " << step_count(sc.stepping) << "\n";
  os << sc.resolved.serialize();
}

/// Applies dotted overrides to an existing resolved config and rebuilds.
inline Scenario scenario_with(const Config& base, const std::vector<std::string>& dotted) {
  Config c = base;
  for (const auto& d : dotted) c.set_dotted(d);
  return build_scenario(c);
}

/// Steps at which snapshots should be written: for each requested time the
/// closest step (ties toward the earlier one).
inline std::vector<std::pair<long, double>> snapshot_steps(long nsteps, double tau,
                                                           const std::vector<double>& times) {
  std::vector<std::pair<long, double>> out;
  for (double t : times) {
    long k = std::lround(t / tau);
    if (k < 0) k = 0;
    if (k > nsteps) k = nsteps;
    out.emplace_back(k, static_cast<double>(k) * tau);
  }
  return out;
}

}  // namespace chn
