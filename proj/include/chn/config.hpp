#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chn/model.hpp"
#include "chn/solver.hpp"

namespace chn {

struct ConfigError : Error {
  using Error::Error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Sectioned key-value configuration.  Lines starting with '#' or ';' are
/// comments; keys are unique per section.
struct Config {
  std::map<std::string, std::map<std::string, std::string>> sections;

  static Config parse_string(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError("config: malformed section header at line " + std::to_string(lineno));
        section = trim(s.substr(1, s.size() - 2));
        if (section.empty())
          throw ConfigError("config: empty section name at line " + std::to_string(lineno));
        c.sections[section];  // ensure existence even if empty
        continue;
      }
      const size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
      if (section.empty())
        throw ConfigError("config: key outside any section at line " + std::to_string(lineno));
      const std::string key = trim(s.substr(0, eq));
      const std::string val = trim(s.substr(eq + 1));
      if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
      auto& sec = c.sections[section];
      if (sec.count(key))
        throw ConfigError("config: duplicate key '" + section + "." + key + "' at line " +
                          std::to_string(lineno));
      sec[key] = val;
    }
    return c;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  /// Applies a command-line override "section.key=value".
  void set_dotted(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    const std::string path = trim(assignment.substr(0, eq));
    const std::string val = trim(assignment.substr(eq + 1));
    const size_t dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size())
      throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    sections[path.substr(0, dot)][path.substr(dot + 1)] = val;
  }

  const std::string* find(const std::string& sec, const std::string& key) const {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
  }

  /// Canonical text form: sections and keys sorted, one key per line.
  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [sec, kv] : sections) {
      out << '[' << sec << "]\n";
      for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
      out << '\n';
    }
    return out.str();
  }

  /// FNV-1a 64-bit over the canonical form.
  uint64_t hash() const {
    const std::string s = serialize();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

  static std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }
};

/// A fully assembled run description plus its resolved config and hash.
struct Scenario {
  Mode mode = Mode::dynamic;
  Grid grid;
  ModelParams params;
  Potential potential;
  BoundaryData boundary;
  InitialData initial;
  StepperConfig stepping;
  Config resolved;
  std::string hash_hex;
};

namespace detail_config {

inline double parse_double(const std::string& sec, const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config: " + sec + "." + key + " must be a number, got '" + v + "'");
  return x;
}

inline int parse_int(const std::string& sec, const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config: " + sec + "." + key + " must be an integer, got '" + v + "'");
  return static_cast<int>(x);
}

inline std::vector<double> parse_list(const std::string& sec, const std::string& key,
                                      const std::string& v) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(parse_double(sec, key, Config::trim(item)));
  if (out.empty()) throw ConfigError("config: " + sec + "." + key + " must be a number list");
  return out;
}

inline Expr parse_expr_xyzt(const std::string& sec, const std::string& key,
                            const std::string& v) {
  try {
    return Expr::parse(v);
  } catch (const ExprError& e) {
    throw ConfigError("config: " + sec + "." + key + ": " + e.what());
  }
}

inline CoefficientFn parse_coefficient(const std::string& sec, const std::string& key,
                                       const std::string& v) {
  if (v == "interpolant")
    return CoefficientFn::of_expr(Expr::parse("max(0, min(1, (1 + phi)/2))", {"phi", "", ""}));
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() && *end == '\0') return CoefficientFn::constant(x);
  try {
    return CoefficientFn::of_expr(Expr::parse(v, {"phi", "", ""}));
  } catch (const ExprError& e) {
    throw ConfigError("config: " + sec + "." + key + ": " + e.what());
  }
}

/// Full schema: the default value of every key, in canonical form.  The
/// defaults describe the reference tumor scenario.
inline Config default_config() {
  Config c;
  auto& mode = c.sections["mode"];
  mode["kind"] = "dynamic";
  auto& grid = c.sections["grid"];
  grid["dim"] = "1";
  grid["nx"] = "128";
  grid["ny"] = "16";
  grid["extent_x"] = "1";
  grid["extent_y"] = "1";
  auto& time = c.sections["time"];
  time["tau"] = "0.001";
  time["t_end"] = "0.5";
  time["newton_tol"] = "1e-10";
  time["newton_max_iter"] = "25";
  time["linear_tol"] = "1e-12";
  time["linear_max_iter"] = "4000";
  time["coupling"] = "decoupled";
  time["picard_iters"] = "2";
  auto& par = c.sections["params"];
  par["gamma"] = "0.1";
  par["eps"] = "0.1";
  par["kappa"] = "1";
  par["lambda_p"] = "0.5";
  par["lambda_a"] = "0.1";
  par["lambda_c"] = "1";
  par["chi"] = "0.3";
  par["eta"] = "0.2";
  par["D"] = "1";
  par["h"] = "interpolant";
  auto& pot = c.sections["potential"];
  pot["type"] = "quartic";
  pot["psi1_coeffs"] = "1,0,0,0,1";
  pot["psi2_coeffs"] = "0,0,-2";
  pot["yosida_n"] = "0.01";
  pot["lo"] = "-1";
  pot["hi"] = "1";
  auto& bnd = c.sections["boundary"];
  bnd["mu_inf"] = "0";
  bnd["sigma_inf"] = "1";
  bnd["sigma_inf_dt"] = "fd";
  auto& ini = c.sections["initial"];
  ini["phi0"] = "tanh((0.15 - abs(x - 0.5)) / 0.070710678118654752)";
  ini["sigma0"] = "1";
  return c;
}

}  // namespace detail_config

/// Merges user keys over the defaults, rejecting unknown sections or keys.
inline Config resolve_config(const Config& user) {
  Config res = detail_config::default_config();
  for (const auto& [sec, kv] : user.sections) {
    auto rs = res.sections.find(sec);
    if (rs == res.sections.end()) throw ConfigError("config: unknown section [" + sec + "]");
    for (const auto& [k, v] : kv) {
      auto rk = rs->second.find(k);
      if (rk == rs->second.end())
        throw ConfigError("config: unknown key '" + sec + "." + k + "'");
      rk->second = v;
    }
  }
  return res;
}

/// Builds the runnable scenario from a user config (defaults filled in,
/// values parsed and cross-checked).  Throws ConfigError on any problem.
inline Scenario build_scenario(const Config& user) {
  using namespace detail_config;
  Scenario sc;
  Config res = resolve_config(user);

  const auto& g = res.sections["grid"];
  const int dim = parse_int("grid", "dim", g.at("dim"));
  if (dim != 1 && dim != 2) throw ConfigError("config: grid.dim must be 1 or 2");
  try {
    if (dim == 1)
      sc.grid = Grid::line(parse_int("grid", "nx", g.at("nx")),
                           parse_double("grid", "extent_x", g.at("extent_x")));
    else
      sc.grid = Grid::box(parse_int("grid", "nx", g.at("nx")),
                          parse_int("grid", "ny", g.at("ny")),
                          parse_double("grid", "extent_x", g.at("extent_x")),
                          parse_double("grid", "extent_y", g.at("extent_y")));
  } catch (const GridError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  try {
    sc.mode = mode_from_string(res.sections["mode"].at("kind"));
  } catch (const ModelError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const auto& t = res.sections["time"];
  sc.stepping.tau = parse_double("time", "tau", t.at("tau"));
  sc.stepping.t_end = parse_double("time", "t_end", t.at("t_end"));
  sc.stepping.newton_tol = parse_double("time", "newton_tol", t.at("newton_tol"));
  sc.stepping.newton_max_iter = parse_int("time", "newton_max_iter", t.at("newton_max_iter"));
  sc.stepping.linear_tol = parse_double("time", "linear_tol", t.at("linear_tol"));
  sc.stepping.linear_max_iter = parse_int("time", "linear_max_iter", t.at("linear_max_iter"));
  sc.stepping.picard_iters = parse_int("time", "picard_iters", t.at("picard_iters"));
  const std::string coupling = t.at("coupling");
  if (coupling == "decoupled")
    sc.stepping.coupling = Coupling::decoupled;
  else if (coupling == "picard")
    sc.stepping.coupling = Coupling::picard;
  else
    throw ConfigError("config: time.coupling must be decoupled or picard");
  if (!(sc.stepping.tau > 0.0)) throw ConfigError("config: time.tau must be positive");
  if (!(sc.stepping.t_end >= sc.stepping.tau))
    throw ConfigError("config: time.t_end must be at least one step");
  if (sc.stepping.picard_iters < 1)
    throw ConfigError("config: time.picard_iters must be >= 1");

  const auto& p = res.sections["params"];
  sc.params = ModelParams::defaults();
  sc.params.gamma = parse_double("params", "gamma", p.at("gamma"));
  sc.params.eps = parse_double("params", "eps", p.at("eps"));
  sc.params.kappa = parse_double("params", "kappa", p.at("kappa"));
  sc.params.lambda_p = parse_double("params", "lambda_p", p.at("lambda_p"));
  sc.params.lambda_a = parse_double("params", "lambda_a", p.at("lambda_a"));
  sc.params.lambda_c = parse_double("params", "lambda_c", p.at("lambda_c"));
  sc.params.chi = parse_double("params", "chi", p.at("chi"));
  sc.params.eta = parse_double("params", "eta", p.at("eta"));
  sc.params.D = parse_coefficient("params", "D", p.at("D"));
  sc.params.h = parse_coefficient("params", "h", p.at("h"));
  sc.params.refresh_bounds();

  const auto& q = res.sections["potential"];
  const std::string ptype = q.at("type");
  if (ptype == "quartic") {
    RegularPotential rp;
    rp.convex_coeffs = parse_list("potential", "psi1_coeffs", q.at("psi1_coeffs"));
    rp.concave_coeffs = parse_list("potential", "psi2_coeffs", q.at("psi2_coeffs"));
    sc.potential = rp;
  } else if (ptype == "obstacle") {
    SingularPotential spn;
    spn.n = parse_double("potential", "yosida_n", q.at("yosida_n"));
    spn.lo = parse_double("potential", "lo", q.at("lo"));
    spn.hi = parse_double("potential", "hi", q.at("hi"));
    sc.potential = spn;
  } else {
    throw ConfigError("config: potential.type must be quartic or obstacle");
  }

  const auto& b = res.sections["boundary"];
  sc.boundary.mu_inf = parse_expr_xyzt("boundary", "mu_inf", b.at("mu_inf"));
  sc.boundary.sigma_inf = parse_expr_xyzt("boundary", "sigma_inf", b.at("sigma_inf"));
  if (b.at("sigma_inf_dt") != "fd")
    sc.boundary.sigma_inf_dt = parse_expr_xyzt("boundary", "sigma_inf_dt", b.at("sigma_inf_dt"));
  sc.boundary.fd_dt_step = sc.stepping.tau / 100.0;

  const auto& ini = res.sections["initial"];
  sc.initial.phi0 = parse_expr_xyzt("initial", "phi0", ini.at("phi0"));
  sc.initial.sigma0 = parse_expr_xyzt("initial", "sigma0", ini.at("sigma0"));

  sc.resolved = std::move(res);
  sc.hash_hex = sc.resolved.hash_hex();
  return sc;
}

}  // namespace chn
