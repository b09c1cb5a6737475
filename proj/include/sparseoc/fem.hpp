#pragma once

/*! \file fem.hpp
    \brief Piecewise-linear finite elements on (0, 1) for the parametrized
           optimality system of the distributed control problem

             -(e^kappa u')' = f + z,  u(0) = u(1) = 0,
             min 1/2 ||u - u_d||^2 + beta/2 ||z||^2.

    Eliminating z = -v / beta leaves, for every parameter y, the coupled system

             [ beta A   M ] [u]   [ beta M f ]
             [  -M      A ] [v] = [ -M u_d   ]

    with A the stiffness matrix for e^kappa and M the mass matrix. Unknowns are
    interleaved node by node (u_1, v_1, u_2, v_2, ...) so the system is banded
    with three sub- and super-diagonals and is solved by banded LU.
*/

#include "errors.hpp"
#include "field.hpp"
#include "result_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sparseoc {

/// Uniform mesh of (0, 1) with n nodes including both boundary nodes.
struct Mesh {
  std::size_t n = 3;

  explicit Mesh(std::size_t nodes) : n(nodes) {
    if (n < 3) throw ValidationError("mesh needs at least 3 nodes");
  }

  double h() const noexcept { return 1.0 / static_cast<double>(n - 1); }
  double x(std::size_t i) const noexcept { return static_cast<double>(i) * h(); }
  std::size_t interior() const noexcept { return n - 2; }
  std::size_t elements() const noexcept { return n - 1; }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Interior nodal values of a function (boundary values are dropped).
inline std::vector<double> interpolate_interior(const Mesh& mesh, const std::function<double(double)>& fn) {
  std::vector<double> v(mesh.interior());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(mesh.x(i + 1));
  return v;
}

/// Symmetric tridiagonal matrix on the interior nodes.
struct SymTridiagonal {
  std::vector<double> diag;
  std::vector<double> off;  // off[i] couples i and i + 1

  std::size_t size() const noexcept { return diag.size(); }

  std::vector<double> multiply(std::span<const double> x) const {
    const std::size_t n = size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = diag[i] * x[i];
      if (i > 0) s += off[i - 1] * x[i - 1];
      if (i + 1 < n) s += off[i] * x[i + 1];
      y[i] = s;
    }
    return y;
  }

  double quadratic_form(std::span<const double> x) const {
    const auto ax = multiply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) s += x[i] * ax[i];
    return s;
  }
};

/// Thomas algorithm; the matrices here are symmetric positive definite.
inline std::vector<double> solve_tridiagonal(const SymTridiagonal& a, std::span<const double> rhs) {
  const std::size_t n = a.size();
  std::vector<double> c(n), d(n);
  double denom = a.diag[0];
  if (!(std::abs(denom) > 0.0)) throw NumericalError("tridiagonal solve: zero pivot");
  c[0] = n > 1 ? a.off[0] / denom : 0.0;
  d[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = a.diag[i] - a.off[i - 1] * c[i - 1];
    if (!(std::abs(denom) > 0.0)) throw NumericalError("tridiagonal solve: zero pivot");
    c[i] = i + 1 < n ? a.off[i] / denom : 0.0;
    d[i] = (rhs[i] - a.off[i - 1] * d[i - 1]) / denom;
  }
  std::vector<double> x(n);
  x[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

/// General banded matrix with LU factorization by partial pivoting.
/// Storage reserves kl extra super-diagonals for pivoting fill-in.
class BandedLU {
 public:
  BandedLU(std::size_t n, std::size_t kl, std::size_t ku)
      : n_(n), kl_(kl), ku_(ku), width_(2 * kl + ku + 1), ab_(n * width_, 0.0), piv_(n, 0) {}

  std::size_t size() const noexcept { return n_; }

  /// Entry (i, j); must lie within the original band |j - i| <= kl / ku.
  double& at(std::size_t i, std::size_t j) { return ab_[i * width_ + (j + kl_ - i)]; }
  double at(std::size_t i, std::size_t j) const { return ab_[i * width_ + (j + kl_ - i)]; }

  /// In-place factorization. Throws NumericalError on a zero or non-finite pivot.
  void factorize() {
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t last_row = std::min(n_ - 1, k + kl_);
      const std::size_t last_col = std::min(n_ - 1, k + kl_ + ku_);
      std::size_t p = k;
      double best = std::abs(at(k, k));
      for (std::size_t i = k + 1; i <= last_row; ++i) {
        if (std::abs(at(i, k)) > best) {
          best = std::abs(at(i, k));
          p = i;
        }
      }
      piv_[k] = p;
      if (!(best > 0.0) || !std::isfinite(best)) {
        throw NumericalError("banded LU: pivot breakdown at row " + std::to_string(k));
      }
      if (p != k) {
        for (std::size_t j = k; j <= last_col; ++j) std::swap(at(k, j), at(p, j));
      }
      const double pivot = at(k, k);
      for (std::size_t i = k + 1; i <= last_row; ++i) {
        const double l = at(i, k) / pivot;
        at(i, k) = l;
        if (l == 0.0) continue;
        for (std::size_t j = k + 1; j <= last_col; ++j) at(i, j) -= l * at(k, j);
      }
    }
    factored_ = true;
  }

  std::vector<double> solve(std::vector<double> b) const {
    if (!factored_) throw ValidationError("banded LU: solve before factorize");
    for (std::size_t k = 0; k < n_; ++k) {
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
      const std::size_t last_row = std::min(n_ - 1, k + kl_);
      for (std::size_t i = k + 1; i <= last_row; ++i) b[i] -= at(i, k) * b[k];
    }
    for (std::size_t i = n_; i-- > 0;) {
      double s = b[i];
      const std::size_t last_col = std::min(n_ - 1, i + kl_ + ku_);
      for (std::size_t j = i + 1; j <= last_col; ++j) s -= at(i, j) * b[j];
      b[i] = s / at(i, i);
    }
    return b;
  }

 private:
  std::size_t n_, kl_, ku_, width_;
  std::vector<double> ab_;
  std::vector<std::size_t> piv_;
  bool factored_ = false;
};

inline constexpr double kKappaOverflowLimit = 700.0;

/// Field modes tabulated at the two Gauss-Legendre points of every element.
/// Row q holds kappa_j(x_q) for j = 1..J; sample q = 2e, 2e + 1 lives in element e.
class FieldSampler {
 public:
  FieldSampler(const Mesh& mesh, const FieldParams& prm) : mesh_(mesh), dim_(prm.dim) {
    prm.validate();
    const double h = mesh.h();
    const double g = 0.5 / std::sqrt(3.0);
    const std::size_t q_count = 2 * mesh.elements();
    points_.resize(q_count);
    for (std::size_t e = 0; e < mesh.elements(); ++e) {
      const double mid = (static_cast<double>(e) + 0.5) * h;
      points_[2 * e] = mid - g * h;
      points_[2 * e + 1] = mid + g * h;
    }
    // column-major in j so that sparse parameter vectors touch contiguous memory
    table_.resize(q_count * dim_);
    for (std::size_t j = 1; j <= dim_; ++j) {
      for (std::size_t q = 0; q < q_count; ++q) table_[(j - 1) * q_count + q] = prm.mode(j, points_[q]);
    }
  }

  const Mesh& mesh() const noexcept { return mesh_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<double>& points() const noexcept { return points_; }

  /// kappa at every sample point; entries of y beyond J are ignored.
  std::vector<double> kappa_samples(std::span<const double> y) const {
    const std::size_t q_count = points_.size();
    std::vector<double> k(q_count, 0.0);
    const std::size_t n = std::min(dim_, y.size());
    for (std::size_t j = 0; j < n; ++j) {
      const double yj = y[j];
      if (yj == 0.0) continue;
      const double* col = table_.data() + j * q_count;
      for (std::size_t q = 0; q < q_count; ++q) k[q] += yj * col[q];
    }
    return k;
  }

 private:
  Mesh mesh_;
  std::size_t dim_;
  std::vector<double> points_;
  std::vector<double> table_;
};

inline double sup_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Stiffness matrix for the coefficient e^kappa given at the element Gauss points.
inline SymTridiagonal stiffness_from_kappa(const Mesh& mesh, std::span<const double> kappa) {
  const double k_sup = sup_abs(kappa);
  if (!(k_sup <= kKappaOverflowLimit)) {
    throw NumericalError("stiffness assembly: ||kappa||_inf = " + std::to_string(k_sup) + " exceeds 700");
  }
  const double h = mesh.h();
  std::vector<double> c(mesh.elements());  // integral of e^kappa over element, divided by h^2
  for (std::size_t e = 0; e < c.size(); ++e) c[e] = 0.5 * (std::exp(kappa[2 * e]) + std::exp(kappa[2 * e + 1])) / h;
  SymTridiagonal a;
  const std::size_t m = mesh.interior();
  a.diag.resize(m);
  a.off.resize(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    a.diag[i] = c[i] + c[i + 1];
    if (i + 1 < m) a.off[i] = -c[i + 1];
  }
  return a;
}

inline SymTridiagonal assemble_stiffness(const FieldSampler& sampler, std::span<const double> y) {
  return stiffness_from_kappa(sampler.mesh(), sampler.kappa_samples(y));
}

inline SymTridiagonal assemble_stiffness(const Mesh& mesh, const FieldParams& prm, std::span<const double> y) {
  return assemble_stiffness(FieldSampler(mesh, prm), y);
}

inline SymTridiagonal assemble_mass(const Mesh& mesh) {
  const double h = mesh.h();
  const std::size_t m = mesh.interior();
  return SymTridiagonal{std::vector<double>(m, 4.0 * h / 6.0), std::vector<double>(m - 1, h / 6.0)};
}

/// Discrete L^2 norm of the piecewise-linear interpolant, sqrt(x^T M x).
inline double l2_norm(const Mesh& mesh, std::span<const double> interior_values) {
  return std::sqrt(std::max(0.0, assemble_mass(mesh).quadratic_form(interior_values)));
}

/// ||v||_V = || |v'| ||_{L^2}, exact for piecewise linears with zero boundary values.
inline double h1_seminorm(const Mesh& mesh, std::span<const double> interior_values) {
  const std::size_t m = interior_values.size();
  double s = 0.0;
  double left = 0.0;
  for (std::size_t i = 0; i <= m; ++i) {
    const double right = i < m ? interior_values[i] : 0.0;
    s += (right - left) * (right - left);
    left = right;
  }
  return std::sqrt(s / mesh.h());
}

/// Solves A(y) u = M (f + z) for the interior state.
inline std::vector<double> solve_state(const FieldSampler& sampler, std::span<const double> y,
                                       std::span<const double> f, std::span<const double> z) {
  const Mesh& mesh = sampler.mesh();
  const std::size_t m = mesh.interior();
  if (f.size() != m || z.size() != m) throw ValidationError("solve_state: data vectors must have n - 2 entries");
  std::vector<double> fz(m);
  for (std::size_t i = 0; i < m; ++i) fz[i] = f[i] + z[i];
  const auto rhs = assemble_mass(mesh).multiply(fz);
  return solve_tridiagonal(assemble_stiffness(sampler, y), rhs);
}

inline std::vector<double> solve_state(const Mesh& mesh, const FieldParams& prm, std::span<const double> y,
                                       std::span<const double> f, std::span<const double> z) {
  return solve_state(FieldSampler(mesh, prm), y, f, z);
}

/// w = (u, v) on the interior nodes.
struct StateAdjointPair {
  std::vector<double> u;
  std::vector<double> v;

  friend bool operator==(const StateAdjointPair&, const StateAdjointPair&) = default;
};

template <>
struct ResultOps<StateAdjointPair> {
  static StateAdjointPair zero_like(const StateAdjointPair& w) {
    return {std::vector<double>(w.u.size(), 0.0), std::vector<double>(w.v.size(), 0.0)};
  }
  static void axpy(StateAdjointPair& acc, double a, const StateAdjointPair& x) {
    ResultOps<std::vector<double>>::axpy(acc.u, a, x.u);
    ResultOps<std::vector<double>>::axpy(acc.v, a, x.v);
  }
  static StateAdjointPair subtract(const StateAdjointPair& a, const StateAdjointPair& b) {
    return {ResultOps<std::vector<double>>::subtract(a.u, b.u), ResultOps<std::vector<double>>::subtract(a.v, b.v)};
  }
};

/// z = -v / beta
inline std::vector<double> control_from_adjoint(std::span<const double> v, double beta) {
  std::vector<double> z(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = -v[i] / beta;
  return z;
}

/// sqrt(beta ||u||_V^2 + ||v||_V^2)
inline double w_norm(const Mesh& mesh, const StateAdjointPair& w, double beta) {
  const double nu = h1_seminorm(mesh, w.u);
  const double nv = h1_seminorm(mesh, w.v);
  return std::sqrt(beta * nu * nu + nv * nv);
}

/// Interleaved block operator [beta A  M; -M  A] in banded storage.
inline BandedLU assemble_optimality_operator(const SymTridiagonal& a, const SymTridiagonal& mass, double beta) {
  const std::size_t m = a.size();
  BandedLU sys(2 * m, 3, 3);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t ru = 2 * i;
    const std::size_t rv = 2 * i + 1;
    sys.at(ru, 2 * i) = beta * a.diag[i];
    sys.at(ru, 2 * i + 1) = mass.diag[i];
    sys.at(rv, 2 * i) = -mass.diag[i];
    sys.at(rv, 2 * i + 1) = a.diag[i];
    if (i > 0) {
      sys.at(ru, 2 * i - 2) = beta * a.off[i - 1];
      sys.at(ru, 2 * i - 1) = mass.off[i - 1];
      sys.at(rv, 2 * i - 2) = -mass.off[i - 1];
      sys.at(rv, 2 * i - 1) = a.off[i - 1];
    }
    if (i + 1 < m) {
      sys.at(ru, 2 * i + 2) = beta * a.off[i];
      sys.at(ru, 2 * i + 3) = mass.off[i];
      sys.at(rv, 2 * i + 2) = -mass.off[i];
      sys.at(rv, 2 * i + 3) = a.off[i];
    }
  }
  return sys;
}

/// Interleaved right-hand side [beta M f; -M u_d].
inline std::vector<double> optimality_rhs(const SymTridiagonal& mass, std::span<const double> f,
                                          std::span<const double> u_d, double beta) {
  const auto mf = mass.multiply(f);
  const auto mud = mass.multiply(u_d);
  std::vector<double> rhs(2 * mf.size());
  for (std::size_t i = 0; i < mf.size(); ++i) {
    rhs[2 * i] = beta * mf[i];
    rhs[2 * i + 1] = -mud[i];
  }
  return rhs;
}

/// rhs - K x for the interleaved optimality operator, accumulated in long double.
inline std::vector<double> optimality_residual(const SymTridiagonal& a, const SymTridiagonal& mass, double beta,
                                               std::span<const double> rhs, std::span<const double> x) {
  const std::size_t m = a.size();
  std::vector<double> r(2 * m);
  using L = long double;
  for (std::size_t i = 0; i < m; ++i) {
    L ru = rhs[2 * i];
    L rv = rhs[2 * i + 1];
    for (std::size_t k = (i > 0 ? i - 1 : 0); k <= std::min(m - 1, i + 1); ++k) {
      const double ak = k == i ? a.diag[i] : a.off[std::min(i, k)];
      const double mk = k == i ? mass.diag[i] : mass.off[std::min(i, k)];
      ru -= L(beta) * ak * x[2 * k] + L(mk) * x[2 * k + 1];
      rv -= -L(mk) * x[2 * k] + L(ak) * x[2 * k + 1];
    }
    r[2 * i] = static_cast<double>(ru);
    r[2 * i + 1] = static_cast<double>(rv);
  }
  return r;
}

/// The y-pointwise optimality system with fixed mesh, field, data and beta.
/// Immutable after construction; solve() may be called concurrently.
class OptimalityProblem {
 public:
  OptimalityProblem(const Mesh& mesh, const FieldParams& prm, std::vector<double> f, std::vector<double> u_d,
                    double beta)
      : sampler_(mesh, prm), mass_(assemble_mass(mesh)), f_(std::move(f)), u_d_(std::move(u_d)), beta_(beta) {
    if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw ValidationError("beta must be > 0");
    if (f_.size() != mesh.interior() || u_d_.size() != mesh.interior()) {
      throw ValidationError("optimality problem: f and u_d must have n - 2 entries");
    }
    rhs_ = optimality_rhs(mass_, f_, u_d_, beta_);
  }

  const Mesh& mesh() const noexcept { return sampler_.mesh(); }
  const FieldSampler& sampler() const noexcept { return sampler_; }
  const std::vector<double>& source() const noexcept { return f_; }
  const std::vector<double>& data() const noexcept { return u_d_; }
  double beta() const noexcept { return beta_; }

  StateAdjointPair solve(std::span<const double> y) const {
    const auto kappa = sampler_.kappa_samples(y);
    const auto a = stiffness_from_kappa(mesh(), kappa);
    auto sys = assemble_optimality_operator(a, mass_, beta_);
    try {
      sys.factorize();
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (||kappa||_inf = " + std::to_string(sup_abs(kappa)) + ")");
    }
    auto x = sys.solve(rhs_);
    // one step of iterative refinement; z = -v / beta amplifies solver roundoff
    const auto dx = sys.solve(optimality_residual(a, mass_, beta_, rhs_, x));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
    StateAdjointPair w;
    const std::size_t m = a.size();
    w.u.resize(m);
    w.v.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      w.u[i] = x[2 * i];
      w.v[i] = x[2 * i + 1];
    }
    return w;
  }

  std::vector<double> control(const StateAdjointPair& w) const { return control_from_adjoint(w.v, beta_); }

 private:
  FieldSampler sampler_;
  SymTridiagonal mass_;
  std::vector<double> f_;
  std::vector<double> u_d_;
  double beta_;
  std::vector<double> rhs_;
};

inline StateAdjointPair solve_optimality(const Mesh& mesh, const FieldParams& prm, std::span<const double> y,
                                         std::span<const double> f, std::span<const double> u_d, double beta) {
  return OptimalityProblem(mesh, prm, {f.begin(), f.end()}, {u_d.begin(), u_d.end()}, beta).solve(y);
}

/// Poincare constant of (0, 1).
inline constexpr double kPoincareUnitInterval = 1.0 / std::numbers::pi;

struct AprioriBound {
  double w_norm;
  double bound;
  bool holds;
};

/// ||w||_W <= C_P (sqrt(beta) ||f|| + ||u_d||) exp(||kappa||_inf), with the sup taken
/// over the coefficient sample points used in assembly.
inline AprioriBound apriori_bound_check(const StateAdjointPair& w, const FieldSampler& sampler,
                                        std::span<const double> y, std::span<const double> f,
                                        std::span<const double> u_d, double beta) {
  const Mesh& mesh = sampler.mesh();
  const double lhs = w_norm(mesh, w, beta);
  const double k_sup = sup_abs(sampler.kappa_samples(y));
  const double rhs =
      kPoincareUnitInterval * (std::sqrt(beta) * l2_norm(mesh, f) + l2_norm(mesh, u_d)) * std::exp(k_sup);
  return {lhs, rhs, lhs <= rhs};
}

}  // namespace sparseoc
