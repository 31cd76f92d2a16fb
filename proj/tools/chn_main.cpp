// Command-line front end: simulate one scenario, run parameter sweeps, or
// validate a configuration against the model assumptions.
//
// Exit codes: 0 success, 1 sweep verdict FAIL/INCONCLUSIVE, 2 configuration
// or validation problem, 3 solver failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chn/chn.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string caps_path;
  int jobs = 1;
  bool calibrate = false;
};

chn::Config load_config(const CommonArgs& a) {
  chn::Config c;
  if (!a.config_path.empty()) c = chn::Config::parse_file(a.config_path);
  for (const auto& s : a.sets) c.set_dotted(s);
  return c;
}

chn::Caps load_caps(const CommonArgs& a) {
  std::string path = a.caps_path;
  if (path.empty() && !a.config_path.empty()) {
    std::string guess = a.config_path;
    const auto pos = guess.rfind(".ini");
    if (pos != std::string::npos) guess = guess.substr(0, pos);
    guess += ".caps.ini";
    if (std::filesystem::exists(guess)) path = guess;
  }
  return chn::Caps::load(path);
}

void add_common(CLI::App* cmd, CommonArgs& a, const std::string& default_out) {
  cmd->add_option("--config", a.config_path, "scenario configuration file (INI)");
  cmd->add_option("--set", a.sets, "override, e.g. --set params.kappa=0.5")
      ->take_all()
      ->expected(-1);
  cmd->add_option("--out", a.out_dir, "output directory")->default_val(default_out);
  cmd->add_option("--jobs", a.jobs, "worker threads for sweep members")->default_val(1);
  cmd->add_option("--caps", a.caps_path,
                  "caps file (defaults to <config>.caps.ini when present)");
  cmd->add_flag("--calibrate", a.calibrate,
                "report suggested caps (observed * 1.25) and exit 0");
}

int validate_and_report(const chn::Scenario& sc) {
  const auto violations =
      chn::validate_model(sc.params, sc.potential, sc.boundary, sc.initial, sc.grid, sc.mode);
  if (violations.empty()) return 0;
  for (const auto& v : violations) std::cerr << "invalid scenario: " << v << "\n";
  return 2;
}

int run_simulate(const CommonArgs& a, const std::vector<double>& snapshot_times) {
  const chn::Scenario sc = chn::build_scenario(load_config(a));
  if (int rc = validate_and_report(sc)) return rc;
  std::filesystem::create_directories(a.out_dir);
  chn::write_manifest(a.out_dir + "/manifest.ini", sc);

  chn::RunOptions opt;
  opt.store_trajectory = !snapshot_times.empty();
  const chn::RunResult rr = chn::run_simulation(sc, {}, opt);

  chn::write_diagnostics_csv(a.out_dir + "/diagnostics.csv", rr.records);
  chn::write_budgets_csv(a.out_dir + "/budgets.csv", rr.budgets);
  chn::write_snapshot_csv(a.out_dir + "/final.csv", rr.final_state);
  for (const auto& [step, t] : chn::snapshot_steps(rr.steps, rr.tau, snapshot_times)) {
    char name[64];
    std::snprintf(name, sizeof(name), "snapshot_%.6g.csv", t);
    chn::write_snapshot_csv(a.out_dir + "/" + name, rr.trajectory[step]);
  }

  std::cout << "scenario " << sc.hash_hex << " mode=" << chn::mode_name(sc.mode)
            << " steps=" << rr.steps << " t_end=" << rr.t_end_effective << "\n";
  std::cout << "poincare=" << rr.poincare << " chi_used=" << rr.chi_used << "\n";
  std::cout << "stability lhs=" << rr.stability.lhs_total
            << " budget=" << rr.stability.rhs_budget << " ratio=" << rr.stability.ratio
            << "\n";
  std::cout << "wrote " << a.out_dir << "/diagnostics.csv\n";
  return 0;
}

int run_validate(const CommonArgs& a) {
  const chn::Scenario sc = chn::build_scenario(load_config(a));
  auto violations =
      chn::validate_model(sc.params, sc.potential, sc.boundary, sc.initial, sc.grid, sc.mode);
  for (auto& v : chn::validate_ctsdep(sc.params)) violations.push_back(v);

  const char* labels[] = {"(A1)", "(A2)", "(A3)", "(A4)", "(C1)",
                          "(C2)", "(C3)", "(S1)", "(S2)", "(S3)"};
  bool any_fail = false;
  for (const char* label : labels) {
    std::vector<std::string> hits;
    for (const auto& v : violations)
      if (v.rfind(label, 0) == 0) hits.push_back(v);
    if (hits.empty()) {
      std::cout << "PASS " << label << "\n";
    } else {
      any_fail = true;
      for (const auto& hits_v : hits) std::cout << "FAIL " << hits_v << "\n";
    }
  }
  return any_fail ? 2 : 0;
}

std::vector<double> parse_ladder_or(const std::vector<double>& given,
                                    std::vector<double> fallback) {
  return given.empty() ? fallback : given;
}

int run_sweep(const std::string& kind, const CommonArgs& a, const std::vector<double>& ladder,
              double mms_kappa) {
  const chn::Caps caps = load_caps(a);

  if (kind == "mms") {
    const chn::MmsResult r = chn::mms_convergence(mms_kappa, a.out_dir, a.jobs);
    std::cout << r.verdict_text;
    if (a.calibrate) return 0;
    return r.pass ? 0 : 1;
  }

  const chn::Scenario base = chn::build_scenario(load_config(a));
  if (int rc = validate_and_report(base)) return rc;

  if (kind == "kappa") {
    const auto values = parse_ladder_or(ladder, {1.0, 0.25, 0.0625});
    const chn::KappaSweepResult r = chn::kappa_sweep(base, values, caps, a.out_dir, a.jobs);
    std::cout << r.verdict_text;
    if (a.calibrate) {
      std::cout << "suggested caps.kappa_err_min = "
                << chn::format_double(r.rows.back().err_l2h1 * 1.25) << "\n";
      return 0;
    }
    return r.pass ? 0 : 1;
  }
  if (kind == "yosida") {
    const auto values = parse_ladder_or(ladder, {1e-1, 1e-2, 1e-3});
    const chn::YosidaSweepResult r = chn::yosida_sweep(base, values, caps, a.out_dir, a.jobs);
    std::cout << r.verdict_text;
    if (a.calibrate) {
      double worst_beta = 0.0;
      for (const auto& row : r.rows) worst_beta = std::max(worst_beta, row.beta_l2);
      std::cout << "suggested caps.yosida_beta_l2_cap = "
                << chn::format_double(worst_beta * 1.25) << "\n";
      return 0;
    }
    return r.pass ? 0 : 1;
  }
  if (kind == "ctsdep") {
    const auto values = parse_ladder_or(ladder, {1e-1, 1e-2, 1e-3});
    const chn::CtsDepResult r =
        chn::continuous_dependence(base, values, caps, a.out_dir, a.jobs);
    std::cout << r.verdict_text;
    if (a.calibrate) {
      double worst = 0.0;
      for (const auto& row : r.rows) worst = std::max(worst, row.ratio);
      std::cout << "suggested caps.ctsdep_ratio_* = " << chn::format_double(worst * 1.25)
                << "\n";
      return 0;
    }
    return r.pass ? 0 : 1;
  }
  if (kind == "stability") {
    const auto values = parse_ladder_or(ladder, {1.0, 0.1, 0.01});
    const chn::StabilitySweepResult r =
        chn::stability_across_kappa(base, values, caps, a.jobs);
    for (size_t i = 0; i < r.kappas.size(); ++i) {
      const auto& rep = r.reports[i];
      std::cout << "kappa=" << chn::format_double(r.kappas[i])
                << " lhs=" << chn::format_double(rep.lhs_total)
                << " budget=" << chn::format_double(rep.rhs_budget)
                << " ratio=" << chn::format_double(rep.ratio) << "\n";
    }
    std::cout << (r.pass ? "PASS" : "FAIL") << " worst_ratio="
              << chn::format_double(r.worst_ratio)
              << " cap=" << chn::format_double(caps.stability_c_cal) << "\n";
    if (a.calibrate) {
      std::cout << "suggested caps.stability_c_cal = "
                << chn::format_double(r.worst_ratio * 1.25) << "\n";
      return 0;
    }
    return r.pass ? 0 : 1;
  }
  std::cerr << "unknown sweep kind '" << kind << "'\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cahn-Hilliard tumor-growth solver and experiment harness"};
  app.require_subcommand(1);

  CommonArgs sim_args, val_args;
  std::vector<double> snapshot_times;
  CLI::App* sim = app.add_subcommand("simulate", "run one scenario and write CSV outputs");
  add_common(sim, sim_args, "out");
  sim->add_option("--snapshot-times", snapshot_times,
                  "comma-separated times at which to write field snapshots")
      ->delimiter(',');

  CLI::App* val = app.add_subcommand("validate", "check a scenario against the assumptions");
  add_common(val, val_args, "out");

  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter-sweep experiment");
  std::string kind;
  CommonArgs sweep_args;
  std::vector<double> ladder;
  double mms_kappa = 1.0;
  sweep->add_option("kind", kind, "kappa | yosida | ctsdep | mms | stability")->required();
  add_common(sweep, sweep_args, "out/sweep");
  sweep->add_option("--ladder", ladder, "override the sweep values (decreasing)")
      ->delimiter(',');
  sweep->add_option("--mms-kappa", mms_kappa,
                    "nutrient time-scale for the convergence study (0 = quasistatic)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(sim_args, snapshot_times);
    if (val->parsed()) return run_validate(val_args);
    if (sweep->parsed()) return run_sweep(kind, sweep_args, ladder, mms_kappa);
  } catch (const chn::NewtonError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const chn::LinearError& e) {
    std::cerr << "linear-solver failure: " << e.what() << "\n";
    return 3;
  } catch (const chn::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const chn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
