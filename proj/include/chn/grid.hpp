#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chn {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct GridError : Error {
  using Error::Error;
};

/// Dirichlet boundary closure: value of a field at a boundary position (x, y)
/// and time t.  Interior operators consult the trace whenever a stencil leg or
/// a quadrature face touches the boundary, so boundary nodes never appear as
/// unknowns.
class DirichletTrace {
 public:
  using Fn = std::function<double(double, double, double)>;

  DirichletTrace() : fn_([](double, double, double) { return 0.0; }) {}

  static DirichletTrace constant(double c) {
    DirichletTrace tr;
    tr.fn_ = [c](double, double, double) { return c; };
    return tr;
  }

  static DirichletTrace of(Fn fn) {
    DirichletTrace tr;
    tr.fn_ = std::move(fn);
    return tr;
  }

  double operator()(double x, double y, double t) const { return fn_(x, y, t); }

 private:
  Fn fn_;
};

/// Uniform structured grid on a line segment or a box.  Only interior nodes
/// carry unknowns; spacing per axis is extent/(n+1) so node (i, j) sits at
/// ((i+1)hx, (j+1)hy) and the boundary lies exactly one spacing outside the
/// first/last interior node.
struct Grid {
  int dim = 1;
  int nx = 0;
  int ny = 1;  // 1 in 1D so size() = nx
  double Lx = 0.0;
  double Ly = 0.0;
  double hx = 0.0;
  double hy = 0.0;

  static Grid line(int n, double extent) {
    check_axis(n, extent, "x");
    Grid g;
    g.dim = 1;
    g.nx = n;
    g.ny = 1;
    g.Lx = extent;
    g.hx = extent / (n + 1);
    return g;
  }

  static Grid box(int nx, int ny, double extent_x, double extent_y) {
    check_axis(nx, extent_x, "x");
    check_axis(ny, extent_y, "y");
    Grid g;
    g.dim = 2;
    g.nx = nx;
    g.ny = ny;
    g.Lx = extent_x;
    g.Ly = extent_y;
    g.hx = extent_x / (nx + 1);
    g.hy = extent_y / (ny + 1);
    return g;
  }

  int size() const { return nx * ny; }

  /// Row-major interior index; bijective onto [0, size()).
  int index(int i, int j) const { return i + nx * j; }

  double x(int i) const { return (i + 1) * hx; }
  double y(int j) const { return dim == 2 ? (j + 1) * hy : 0.0; }

  /// Midpoint-rule cell volume attached to each interior node.
  double cell_volume() const { return dim == 2 ? hx * hy : hx; }

  bool same_layout(const Grid& o) const {
    return dim == o.dim && nx == o.nx && ny == o.ny && Lx == o.Lx && Ly == o.Ly;
  }

 private:
  static void check_axis(int n, double extent, const char* axis) {
    if (n < 3)
      throw GridError(std::string("grid: need at least 3 interior nodes per axis, axis ") + axis);
    if (!(extent > 0.0))
      throw GridError(std::string("grid: extent must be positive, axis ") + axis);
  }
};

/// Nodal values over the interior nodes of a grid plus the Dirichlet closure.
struct Field {
  Grid grid;
  std::vector<double> v;
  DirichletTrace trace;

  Field() = default;

  Field(const Grid& g, double fill, DirichletTrace tr)
      : grid(g), v(static_cast<size_t>(g.size()), fill), trace(std::move(tr)) {}

  Field(const Grid& g, std::vector<double> vals, DirichletTrace tr)
      : grid(g), v(std::move(vals)), trace(std::move(tr)) {
    if (static_cast<int>(v.size()) != g.size())
      throw GridError("field: value count does not match grid size");
  }

  double& operator[](int k) { return v[static_cast<size_t>(k)]; }
  const double& operator[](int k) const { return v[static_cast<size_t>(k)]; }
};

/// Samples fn(x, y) over the interior nodes; the trace is supplied separately.
inline Field sample_field(const Grid& g, const std::function<double(double, double)>& fn,
                          DirichletTrace tr) {
  Field f(g, 0.0, std::move(tr));
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) f[g.index(i, j)] = fn(g.x(i), g.y(j));
  return f;
}

namespace detail {

/// Value of f one stencil leg away from (i, j) along axis/dir, consulting the
/// trace at the exact boundary position when the leg exits the interior.
inline double neighbor_value(const Field& f, int i, int j, int axis, int dir, double t) {
  const Grid& g = f.grid;
  if (axis == 0) {
    const int ii = i + dir;
    if (ii < 0) return f.trace(0.0, g.y(j), t);
    if (ii >= g.nx) return f.trace(g.Lx, g.y(j), t);
    return f[g.index(ii, j)];
  }
  const int jj = j + dir;
  if (jj < 0) return f.trace(g.x(i), 0.0, t);
  if (jj >= g.ny) return f.trace(g.x(i), g.Ly, t);
  return f[g.index(i, jj)];
}

}  // namespace detail

/// Second-order centered five/three-point Laplacian with Dirichlet lifting:
/// boundary legs read the field's trace at time t.
inline std::vector<double> laplacian(const Field& f, double t) {
  const Grid& g = f.grid;
  std::vector<double> out(static_cast<size_t>(g.size()), 0.0);
  const double ax = 1.0 / (g.hx * g.hx);
  const double ay = g.dim == 2 ? 1.0 / (g.hy * g.hy) : 0.0;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      const double c = f[k];
      double acc = (detail::neighbor_value(f, i, j, 0, -1, t) - 2.0 * c +
                    detail::neighbor_value(f, i, j, 0, +1, t)) *
                   ax;
      if (g.dim == 2)
        acc += (detail::neighbor_value(f, i, j, 1, -1, t) - 2.0 * c +
                detail::neighbor_value(f, i, j, 1, +1, t)) *
               ay;
      out[static_cast<size_t>(k)] = acc;
    }
  }
  return out;
}

/// Conservative flux divergence div(w (grad a - eta grad b)) with
/// arithmetic-mean face weights.  All three fields share the grid; boundary
/// legs read each field's own trace at time t.  Throws on a non-positive
/// weight at any node or boundary evaluation used.
inline std::vector<double> div_weighted_flux(const Field& w, const Field& a, const Field& b,
                                             double eta, double t) {
  const Grid& g = a.grid;
  if (!w.grid.same_layout(g) || !b.grid.same_layout(g))
    throw GridError("div_weighted_flux: mismatched grids");
  std::vector<double> out(static_cast<size_t>(g.size()), 0.0);
  const double ax = 1.0 / (g.hx * g.hx);
  const double ay = g.dim == 2 ? 1.0 / (g.hy * g.hy) : 0.0;
  auto face = [&](int k, int i, int j, int axis, int dir, double inv_h2) {
    const double wc = w[k];
    const double wn = detail::neighbor_value(w, i, j, axis, dir, t);
    if (!(wc > 0.0) || !(wn > 0.0))
      throw GridError("div_weighted_flux: non-positive weight");
    const double wf = 0.5 * (wc + wn);
    const double da = detail::neighbor_value(a, i, j, axis, dir, t) - a[k];
    const double db = detail::neighbor_value(b, i, j, axis, dir, t) - b[k];
    return wf * (da - eta * db) * inv_h2;
  };
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      double acc = face(k, i, j, 0, -1, ax) + face(k, i, j, 0, +1, ax);
      if (g.dim == 2) acc += face(k, i, j, 1, -1, ay) + face(k, i, j, 1, +1, ay);
      out[static_cast<size_t>(k)] = acc;
    }
  }
  return out;
}

/// Face-based quadrature of w grad(a).grad(b) over the domain, boundary faces
/// included via the traces.  Pass w = nullptr for unit weight.  This pairing
/// is the summation-by-parts partner of div_weighted_flux/laplacian: for any
/// zero-trace c,  l2_inner(div_weighted_flux(w,a,0,0,t), c) =
/// -face_grad_inner(&w, a, c, t) exactly (up to roundoff).
inline double face_grad_inner(const Field* w, const Field& a, const Field& b, double t) {
  const Grid& g = a.grid;
  if (!b.grid.same_layout(g) || (w && !w->grid.same_layout(g)))
    throw GridError("face_grad_inner: mismatched grids");
  double acc = 0.0;
  // value of f at node or at the boundary when the index steps outside
  auto val = [&](const Field& f, int i, int j) {
    if (i < 0) return f.trace(0.0, g.y(j), t);
    if (i >= g.nx) return f.trace(g.Lx, g.y(j), t);
    if (j < 0) return f.trace(g.x(i), 0.0, t);
    if (j >= g.ny) return f.trace(g.x(i), g.Ly, t);
    return f.v[static_cast<size_t>(g.index(i, j))];
  };
  const double wy = g.dim == 2 ? g.hy : 1.0;
  for (int j = 0; j < g.ny; ++j) {
    for (int fi = 0; fi <= g.nx; ++fi) {  // x-faces between fi-1 and fi
      const double da = val(a, fi, j) - val(a, fi - 1, j);
      const double db = val(b, fi, j) - val(b, fi - 1, j);
      double wf = 1.0;
      if (w) wf = 0.5 * (val(*w, fi, j) + val(*w, fi - 1, j));
      acc += wf * (da / g.hx) * (db / g.hx) * g.hx * wy;
    }
  }
  if (g.dim == 2) {
    for (int i = 0; i < g.nx; ++i) {
      for (int fj = 0; fj <= g.ny; ++fj) {  // y-faces between fj-1 and fj
        const double da = val(a, i, fj) - val(a, i, fj - 1);
        const double db = val(b, i, fj) - val(b, i, fj - 1);
        double wf = 1.0;
        if (w) wf = 0.5 * (val(*w, i, fj) + val(*w, i, fj - 1));
        acc += wf * (da / g.hy) * (db / g.hy) * g.hy * g.hx;
      }
    }
  }
  return acc;
}

/// integral of |grad f|^2, boundary faces included via the trace.
inline double gradient_sq_integral(const Field& f, double t) {
  return face_grad_inner(nullptr, f, f, t);
}

/// Midpoint-rule L2 inner product over interior nodes.
inline double l2_inner(const Grid& g, const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || static_cast<int>(a.size()) != g.size())
    throw GridError("l2_inner: size mismatch");
  double acc = 0.0;
  for (size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc * g.cell_volume();
}

inline double l2_norm(const Grid& g, const std::vector<double>& a) {
  return std::sqrt(l2_inner(g, a, a));
}

inline double l2_inner(const Field& a, const Field& b) { return l2_inner(a.grid, a.v, b.v); }
inline double l2_norm(const Field& a) { return l2_norm(a.grid, a.v); }

}  // namespace chn
