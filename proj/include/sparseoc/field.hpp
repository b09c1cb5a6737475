#pragma once

/*! \file field.hpp
    \brief Lognormal diffusion parametrization kappa(x, y) = sum_j y_j kappa_j(x)
           and the weight sequence rho_j used by the a-priori indicator.

    The default modes are kappa_j(x) = j^{-alpha} sin(pi j x) / 2 on (0, 1).
*/

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace sparseoc {

/// kappa_j(x) for a 1-based mode index j.
using ModeFunction = std::function<double(std::size_t j, double x)>;

struct FieldParams {
  double alpha = 2.0;
  std::size_t dim = 1;     // truncation J
  double epsilon = 0.1;    // rho_j = rescale * j^{alpha - 1 - epsilon}
  unsigned r = 2;          // differentiation order in b_nu
  double rescale = 1.0;
  ModeFunction modes;      // empty: sine modes

  void validate() const {
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw ValidationError("field: alpha must be >= 1");
    if (dim < 1) throw ValidationError("field: dim must be positive");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("field: epsilon must be > 0");
    if (r < 1) throw ValidationError("field: r must be positive");
    if (!(rescale > 0.0) || !std::isfinite(rescale)) throw ValidationError("field: rescale must be > 0");
  }

  double mode(std::size_t j, double x) const {
    if (modes) return modes(j, x);
    return std::pow(static_cast<double>(j), -alpha) * std::sin(std::numbers::pi * static_cast<double>(j) * x) / 2.0;
  }

  /// Compares the numeric parameters only; custom mode functions are not comparable.
  friend bool operator==(const FieldParams& a, const FieldParams& b) {
    return a.alpha == b.alpha && a.dim == b.dim && a.epsilon == b.epsilon && a.r == b.r &&
           a.rescale == b.rescale;
  }
};

/// kappa(x, y); entries of y beyond prm.dim are ignored, missing entries count as 0.
inline double kappa_eval(const FieldParams& prm, double x, std::span<const double> y) {
  double k = 0.0;
  const std::size_t n = std::min(prm.dim, y.size());
  for (std::size_t j = 1; j <= n; ++j) {
    if (y[j - 1] != 0.0) k += y[j - 1] * prm.mode(j, x);
  }
  return k;
}

inline double rho(const FieldParams& prm, std::size_t j) {
  if (j < 1 || j > prm.dim) throw ValidationError("rho: index " + std::to_string(j) + " outside 1..J");
  return prm.rescale * std::pow(static_cast<double>(j), prm.alpha - 1.0 - prm.epsilon);
}

inline std::size_t default_grid_points(const FieldParams& prm) {
  return std::max<std::size_t>(101, 10 * prm.dim + 1);
}

/// max over a uniform grid of sum_j rho_j |kappa_j(x)|, at the current rescale.
inline double estimate_weighted_sup(const FieldParams& prm, std::size_t grid_points) {
  if (grid_points < 2) throw ValidationError("estimate_weighted_sup: need at least 2 grid points");
  std::vector<double> rhos(prm.dim);
  for (std::size_t j = 1; j <= prm.dim; ++j) rhos[j - 1] = rho(prm, j);
  double k_max = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(grid_points - 1);
    double s = 0.0;
    for (std::size_t j = 1; j <= prm.dim; ++j) s += rhos[j - 1] * std::abs(prm.mode(j, x));
    k_max = std::max(k_max, s);
  }
  return k_max;
}

/// ln 2 / sqrt(r)
inline double rescale_budget(unsigned r) { return std::numbers::ln2 / std::sqrt(static_cast<double>(r)); }

/// Choose rescale so that sup_x sum_j rho_j |kappa_j(x)| = 0.99 ln2 / sqrt(r) on the grid.
inline FieldParams auto_rescale(FieldParams prm, std::size_t grid_points) {
  if (grid_points < 101) throw ValidationError("auto_rescale: grid_points must be >= 101");
  prm.rescale = 1.0;
  const double k = estimate_weighted_sup(prm, grid_points);
  if (!(k > 0.0)) throw NumericalError("auto_rescale: degenerate field (K = 0)");
  prm.rescale = 0.99 * rescale_budget(prm.r) / k;
  return prm;
}

inline FieldParams auto_rescale(FieldParams prm) {
  const std::size_t g = default_grid_points(prm);
  return auto_rescale(std::move(prm), g);
}

}  // namespace sparseoc
