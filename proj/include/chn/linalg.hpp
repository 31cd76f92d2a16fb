#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <tuple>
#include <vector>

#include "chn/grid.hpp"

namespace chn {

struct LinearError : Error {
  using Error::Error;
};

/// Tiny deterministic xorshift generator for probes and test vectors.
struct Rng {
  uint64_t s;
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : s(seed ? seed : 1) {}
  uint64_t next() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return s;
  }
  /// Uniform in [-1, 1].
  double sym() { return 2.0 * (static_cast<double>(next() >> 11) * 0x1.0p-53) - 1.0; }
  /// Uniform in [lo, hi].
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53);
  }
};

/// CSR sparse operator over interior nodes.  Rows hold column-sorted entries;
/// the symmetric flag is an assembly promise checked by symmetry_probe.
struct Csr {
  int n = 0;
  std::vector<int> rowp;
  std::vector<int> col;
  std::vector<double> val;
  bool symmetric = false;

  int nnz() const { return static_cast<int>(col.size()); }

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int p = rowp[i]; p < rowp[i + 1]; ++p) acc += val[p] * x[static_cast<size_t>(col[p])];
      y[static_cast<size_t>(i)] = acc;
    }
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y;
    apply(x, y);
    return y;
  }

  /// Position of entry (i, j) in val, or -1 when outside the pattern.
  int find(int i, int j) const {
    for (int p = rowp[i]; p < rowp[i + 1]; ++p)
      if (col[p] == j) return p;
    return -1;
  }
};

/// Builds a CSR matrix from (row, col, value) triplets; duplicates are summed.
inline Csr csr_from_triplets(int n, std::vector<std::tuple<int, int, double>> trip,
                             bool symmetric = false) {
  std::sort(trip.begin(), trip.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  Csr A;
  A.n = n;
  A.symmetric = symmetric;
  A.rowp.assign(static_cast<size_t>(n) + 1, 0);
  int last_r = -1, last_c = -1;
  for (const auto& [r, c, v] : trip) {
    if (r < 0 || r >= n || c < 0 || c >= n) throw LinearError("csr: triplet out of range");
    if (r == last_r && c == last_c) {
      A.val.back() += v;
    } else {
      A.col.push_back(c);
      A.val.push_back(v);
      ++A.rowp[static_cast<size_t>(r) + 1];
      last_r = r;
      last_c = c;
    }
  }
  for (int i = 0; i < n; ++i) A.rowp[static_cast<size_t>(i) + 1] += A.rowp[static_cast<size_t>(i)];
  return A;
}

inline Csr csr_identity(int n, double scale = 1.0) {
  Csr I;
  I.n = n;
  I.symmetric = true;
  I.rowp.resize(static_cast<size_t>(n) + 1);
  I.col.resize(static_cast<size_t>(n));
  I.val.assign(static_cast<size_t>(n), scale);
  for (int i = 0; i <= n; ++i) I.rowp[static_cast<size_t>(i)] = i;
  for (int i = 0; i < n; ++i) I.col[static_cast<size_t>(i)] = i;
  return I;
}

/// Sparse product A*B with column-sorted output rows.
inline Csr csr_matmul(const Csr& A, const Csr& B) {
  if (A.n != B.n) throw LinearError("csr_matmul: size mismatch");
  const int n = A.n;
  Csr C;
  C.n = n;
  C.rowp.assign(static_cast<size_t>(n) + 1, 0);
  std::vector<double> acc(static_cast<size_t>(n), 0.0);
  std::vector<int> marker(static_cast<size_t>(n), -1);
  std::vector<int> cols;
  for (int i = 0; i < n; ++i) {
    cols.clear();
    for (int p = A.rowp[i]; p < A.rowp[i + 1]; ++p) {
      const int k = A.col[p];
      const double av = A.val[p];
      for (int q = B.rowp[k]; q < B.rowp[k + 1]; ++q) {
        const int j = B.col[q];
        if (marker[static_cast<size_t>(j)] != i) {
          marker[static_cast<size_t>(j)] = i;
          acc[static_cast<size_t>(j)] = 0.0;
          cols.push_back(j);
        }
        acc[static_cast<size_t>(j)] += av * B.val[q];
      }
    }
    std::sort(cols.begin(), cols.end());
    for (int j : cols) {
      C.col.push_back(j);
      C.val.push_back(acc[static_cast<size_t>(j)]);
    }
    C.rowp[static_cast<size_t>(i) + 1] = static_cast<int>(C.col.size());
  }
  return C;
}

/// Union sparsity pattern of the given matrices, values zeroed, plus for each
/// input a map from its entry positions into the union's val array.  Used to
/// refill a fixed Jacobian pattern cheaply every Newton iteration.
inline Csr csr_union_pattern(const std::vector<const Csr*>& parts,
                             std::vector<std::vector<int>>& maps) {
  if (parts.empty()) throw LinearError("csr_union_pattern: no inputs");
  const int n = parts.front()->n;
  Csr U;
  U.n = n;
  U.rowp.assign(static_cast<size_t>(n) + 1, 0);
  std::vector<int> cols;
  std::vector<int> marker(static_cast<size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    cols.clear();
    for (const Csr* A : parts) {
      if (A->n != n) throw LinearError("csr_union_pattern: size mismatch");
      for (int p = A->rowp[i]; p < A->rowp[i + 1]; ++p) {
        const int j = A->col[p];
        if (marker[static_cast<size_t>(j)] != i) {
          marker[static_cast<size_t>(j)] = i;
          cols.push_back(j);
        }
      }
    }
    std::sort(cols.begin(), cols.end());
    for (int j : cols) U.col.push_back(j);
    U.rowp[static_cast<size_t>(i) + 1] = static_cast<int>(U.col.size());
  }
  U.val.assign(U.col.size(), 0.0);
  maps.assign(parts.size(), {});
  for (size_t a = 0; a < parts.size(); ++a) {
    const Csr* A = parts[a];
    maps[a].resize(static_cast<size_t>(A->nnz()));
    for (int i = 0; i < n; ++i) {
      int u = U.rowp[i];
      for (int p = A->rowp[i]; p < A->rowp[i + 1]; ++p) {
        while (U.col[u] != A->col[p]) ++u;
        maps[a][static_cast<size_t>(p)] = u;
      }
    }
  }
  return U;
}

/// Max relative asymmetry |<Ax,y> - <x,Ay>| over a few random pairs.
inline double symmetry_probe(const Csr& A, int trials = 8, uint64_t seed = 42) {
  Rng rng(seed);
  std::vector<double> x(static_cast<size_t>(A.n)), y(static_cast<size_t>(A.n));
  double worst = 0.0;
  for (int tr = 0; tr < trials; ++tr) {
    for (auto& v : x) v = rng.sym();
    for (auto& v : y) v = rng.sym();
    const auto Ax = A.apply(x);
    const auto Ay = A.apply(y);
    double axy = 0.0, ayx = 0.0, scale = 0.0;
    for (size_t k = 0; k < x.size(); ++k) {
      axy += Ax[k] * y[k];
      ayx += Ay[k] * x[k];
      scale += std::abs(Ax[k] * y[k]) + std::abs(Ay[k] * x[k]);
    }
    worst = std::max(worst, std::abs(axy - ayx) / (scale + 1e-300));
  }
  return worst;
}

struct LinearConfig {
  double tol = 1e-11;
  int max_iter = 2000;
};

enum class LinearStatus { ok, max_iters, breakdown };

/// Krylov result; on max_iters/breakdown x holds the best iterate seen.
struct LinearResult {
  std::vector<double> x;
  double relres = 0.0;
  int iters = 0;
  LinearStatus status = LinearStatus::ok;
  bool converged() const { return status == LinearStatus::ok; }
};

namespace detail {
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}
inline double nrm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }
}  // namespace detail

/// Preconditioned conjugate gradients for symmetric positive definite
/// operators; diag_precond (Jacobi) may be null.
inline LinearResult cg_solve(const Csr& A, const std::vector<double>& b,
                             const std::vector<double>* x0, LinearConfig cfg,
                             const std::vector<double>* diag_precond = nullptr) {
  using detail::dot;
  using detail::nrm2;
  const size_t n = b.size();
  LinearResult out;
  out.x = x0 ? *x0 : std::vector<double>(n, 0.0);
  const double bnorm = nrm2(b);
  if (bnorm == 0.0) {
    out.x.assign(n, 0.0);
    return out;
  }
  std::vector<double> r(n), z(n), p(n), Ap(n);
  A.apply(out.x, Ap);
  for (size_t k = 0; k < n; ++k) r[k] = b[k] - Ap[k];
  auto precond = [&](const std::vector<double>& rr, std::vector<double>& zz) {
    if (diag_precond)
      for (size_t k = 0; k < n; ++k) zz[k] = rr[k] / (*diag_precond)[k];
    else
      zz = rr;
  };
  precond(r, z);
  p = z;
  double rz = dot(r, z);
  double best_res = nrm2(r);
  std::vector<double> best_x = out.x;
  for (int it = 0; it < cfg.max_iter; ++it) {
    const double rn = nrm2(r);
    if (rn < best_res) {
      best_res = rn;
      best_x = out.x;
    }
    if (rn <= cfg.tol * bnorm) {
      out.relres = rn / bnorm;
      out.iters = it;
      return out;
    }
    A.apply(p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0) || !std::isfinite(pAp)) {
      out.x = best_x;
      out.relres = best_res / bnorm;
      out.iters = it;
      out.status = LinearStatus::breakdown;
      return out;
    }
    const double alpha = rz / pAp;
    for (size_t k = 0; k < n; ++k) {
      out.x[k] += alpha * p[k];
      r[k] -= alpha * Ap[k];
    }
    precond(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
  }
  const double rn = nrm2(r);
  if (rn <= cfg.tol * bnorm) {
    out.relres = rn / bnorm;
    out.iters = cfg.max_iter;
    return out;
  }
  out.x = best_x;
  out.relres = best_res / bnorm;
  out.iters = cfg.max_iter;
  out.status = LinearStatus::max_iters;
  return out;
}

/// ILU(0): incomplete LU on the pattern of A.  Factors are stored in one CSR
/// (strict lower = L with unit diagonal implied, diagonal + upper = U).
struct Ilu0 {
  Csr lu;
  std::vector<int> diag;

  static Ilu0 factor(const Csr& A) {
    Ilu0 f;
    f.lu = A;
    const int n = A.n;
    f.diag.assign(static_cast<size_t>(n), -1);
    for (int i = 0; i < n; ++i)
      for (int p = f.lu.rowp[i]; p < f.lu.rowp[i + 1]; ++p)
        if (f.lu.col[p] == i) f.diag[static_cast<size_t>(i)] = p;
    for (int i = 0; i < n; ++i)
      if (f.diag[static_cast<size_t>(i)] < 0) throw LinearError("ilu0: missing diagonal entry");
    std::vector<int> pos(static_cast<size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
      for (int p = f.lu.rowp[i]; p < f.lu.rowp[i + 1]; ++p) pos[static_cast<size_t>(f.lu.col[p])] = p;
      for (int p = f.lu.rowp[i]; p < f.lu.rowp[i + 1]; ++p) {
        const int k = f.lu.col[p];
        if (k >= i) break;  // strict lower part only (rows are column-sorted)
        const double piv = f.lu.val[static_cast<size_t>(f.diag[static_cast<size_t>(k)])];
        if (piv == 0.0 || !std::isfinite(piv)) throw LinearError("ilu0: zero pivot");
        const double lik = f.lu.val[static_cast<size_t>(p)] / piv;
        f.lu.val[static_cast<size_t>(p)] = lik;
        for (int q = f.diag[static_cast<size_t>(k)] + 1; q < f.lu.rowp[k + 1]; ++q) {
          const int j = f.lu.col[q];
          const int pj = pos[static_cast<size_t>(j)];
          if (pj >= 0) f.lu.val[static_cast<size_t>(pj)] -= lik * f.lu.val[static_cast<size_t>(q)];
        }
      }
      for (int p = f.lu.rowp[i]; p < f.lu.rowp[i + 1]; ++p) pos[static_cast<size_t>(f.lu.col[p])] = -1;
    }
    return f;
  }

  /// z = (LU)^{-1} r.
  void solve(const std::vector<double>& r, std::vector<double>& z) const {
    const int n = lu.n;
    z = r;
    for (int i = 0; i < n; ++i) {
      double acc = z[static_cast<size_t>(i)];
      for (int p = lu.rowp[i]; p < lu.rowp[i + 1] && lu.col[p] < i; ++p)
        acc -= lu.val[static_cast<size_t>(p)] * z[static_cast<size_t>(lu.col[p])];
      z[static_cast<size_t>(i)] = acc;
    }
    for (int i = n - 1; i >= 0; --i) {
      double acc = z[static_cast<size_t>(i)];
      const int d = diag[static_cast<size_t>(i)];
      for (int p = d + 1; p < lu.rowp[i + 1]; ++p)
        acc -= lu.val[static_cast<size_t>(p)] * z[static_cast<size_t>(lu.col[p])];
      z[static_cast<size_t>(i)] = acc / lu.val[static_cast<size_t>(d)];
    }
  }
};

/// Stabilized bi-conjugate gradients for nonsymmetric systems, optional ILU(0)
/// right preconditioning.
inline LinearResult bicgstab_solve(const Csr& A, const std::vector<double>& b,
                                   const std::vector<double>* x0, LinearConfig cfg,
                                   const Ilu0* M = nullptr) {
  using detail::dot;
  using detail::nrm2;
  const size_t n = b.size();
  LinearResult out;
  out.x = x0 ? *x0 : std::vector<double>(n, 0.0);
  const double bnorm = nrm2(b);
  if (bnorm == 0.0) {
    out.x.assign(n, 0.0);
    return out;
  }
  std::vector<double> r(n), r0(n), p(n, 0.0), v(n, 0.0), s(n), t(n), ph(n), sh(n);
  A.apply(out.x, v);
  for (size_t k = 0; k < n; ++k) r[k] = b[k] - v[k];
  r0 = r;
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  std::fill(v.begin(), v.end(), 0.0);
  double best_res = nrm2(r);
  std::vector<double> best_x = out.x;
  auto precond = [&](const std::vector<double>& rr, std::vector<double>& zz) {
    if (M)
      M->solve(rr, zz);
    else
      zz = rr;
  };
  for (int it = 0; it < cfg.max_iter; ++it) {
    const double rn = nrm2(r);
    if (rn < best_res) {
      best_res = rn;
      best_x = out.x;
    }
    if (rn <= cfg.tol * bnorm) {
      out.relres = rn / bnorm;
      out.iters = it;
      return out;
    }
    const double rho_new = dot(r0, r);
    if (std::abs(rho_new) < 1e-300 || !std::isfinite(rho_new)) {
      out.x = best_x;
      out.relres = best_res / bnorm;
      out.iters = it;
      out.status = LinearStatus::breakdown;
      return out;
    }
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (size_t k = 0; k < n; ++k) p[k] = r[k] + beta * (p[k] - omega * v[k]);
    precond(p, ph);
    A.apply(ph, v);
    const double r0v = dot(r0, v);
    if (std::abs(r0v) < 1e-300 || !std::isfinite(r0v)) {
      out.x = best_x;
      out.relres = best_res / bnorm;
      out.iters = it;
      out.status = LinearStatus::breakdown;
      return out;
    }
    alpha = rho / r0v;
    for (size_t k = 0; k < n; ++k) s[k] = r[k] - alpha * v[k];
    if (nrm2(s) <= cfg.tol * bnorm) {
      for (size_t k = 0; k < n; ++k) out.x[k] += alpha * ph[k];
      A.apply(out.x, t);
      for (size_t k = 0; k < n; ++k) r[k] = b[k] - t[k];
      out.relres = nrm2(r) / bnorm;
      out.iters = it + 1;
      return out;
    }
    precond(s, sh);
    A.apply(sh, t);
    const double tt = dot(t, t);
    if (tt < 1e-300 || !std::isfinite(tt)) {
      out.x = best_x;
      out.relres = best_res / bnorm;
      out.iters = it;
      out.status = LinearStatus::breakdown;
      return out;
    }
    omega = dot(t, s) / tt;
    for (size_t k = 0; k < n; ++k) {
      out.x[k] += alpha * ph[k] + omega * sh[k];
      r[k] = s[k] - omega * t[k];
    }
    if (std::abs(omega) < 1e-300) {
      out.x = best_x;
      out.relres = best_res / bnorm;
      out.iters = it;
      out.status = LinearStatus::breakdown;
      return out;
    }
  }
  const double rn = nrm2(r);
  out.relres = rn / bnorm;
  out.iters = cfg.max_iter;
  if (rn <= cfg.tol * bnorm) return out;
  out.x = best_x;
  out.relres = best_res / bnorm;
  out.status = LinearStatus::max_iters;
  return out;
}

/// Smallest Ritz value of a symmetric operator after a fixed number of
/// Lanczos steps (no reorthogonalization; plenty for a coercivity probe).
inline double lanczos_smallest_ritz(const Csr& A, int steps = 20, uint64_t seed = 1234) {
  using detail::dot;
  using detail::nrm2;
  const int n = A.n;
  const int m = std::min(steps, n);
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n)), v_prev(static_cast<size_t>(n), 0.0),
      w(static_cast<size_t>(n));
  for (auto& e : v) e = rng.sym();
  double nv = nrm2(v);
  for (auto& e : v) e /= nv;
  std::vector<double> a, b;  // diagonal, off-diagonal
  double beta = 0.0;
  for (int j = 0; j < m; ++j) {
    A.apply(v, w);
    if (j > 0)
      for (int k = 0; k < n; ++k) w[static_cast<size_t>(k)] -= beta * v_prev[static_cast<size_t>(k)];
    const double alpha = dot(w, v);
    for (int k = 0; k < n; ++k) w[static_cast<size_t>(k)] -= alpha * v[static_cast<size_t>(k)];
    a.push_back(alpha);
    beta = nrm2(w);
    if (j + 1 < m) {
      if (beta < 1e-14) break;  // exact invariant subspace
      b.push_back(beta);
      v_prev = v;
      for (int k = 0; k < n; ++k) v[static_cast<size_t>(k)] = w[static_cast<size_t>(k)] / beta;
    }
  }
  const int mm = static_cast<int>(a.size());
  // Sturm-count bisection for the smallest eigenvalue of the tridiagonal.
  auto count_below = [&](double lambda) {
    int cnt = 0;
    double d = 1.0;
    for (int i = 0; i < mm; ++i) {
      const double off = i > 0 ? b[static_cast<size_t>(i) - 1] : 0.0;
      d = a[static_cast<size_t>(i)] - lambda - (i > 0 ? off * off / d : 0.0);
      if (d == 0.0) d = -1e-300;
      if (d < 0.0) ++cnt;
    }
    return cnt;
  };
  double lo = a[0], hi = a[0];
  for (int i = 0; i < mm; ++i) {
    const double bl = i > 0 ? std::abs(b[static_cast<size_t>(i) - 1]) : 0.0;
    const double br = i + 1 < mm ? std::abs(b[static_cast<size_t>(i)]) : 0.0;
    lo = std::min(lo, a[static_cast<size_t>(i)] - bl - br);
    hi = std::max(hi, a[static_cast<size_t>(i)] + bl + br);
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= 1)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace chn
