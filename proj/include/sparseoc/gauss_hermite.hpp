#pragma once

/*! \file gauss_hermite.hpp
    \brief Gauss-Hermite rules for the standard normal measure N(0,1) and the
           orthonormal (probabilists') Hermite polynomials.

    Level nu uses m(nu) = nu + 1 points, so m(0) = 1 is the single node y = 0.
    Rules are built once per level and shared for the lifetime of the process.
*/

#include "errors.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace sparseoc {

inline constexpr std::size_t kMaxRulePoints = 200;

struct UnivariateRule {
  unsigned level = 0;
  std::vector<double> nodes;    // strictly increasing, symmetric about 0
  std::vector<double> weights;  // positive, sum to 1

  std::size_t size() const noexcept { return nodes.size(); }
};

inline constexpr std::size_t points_for_level(unsigned level) noexcept { return level + 1; }

/// Orthonormal Hermite polynomial H_l(y) in L^2(N(0,1)), by the three-term recurrence.
inline double hermite_orthonormal(unsigned l, double y) {
  if (l > 500) throw ValidationError("hermite_orthonormal: degree above 500");
  if (!std::isfinite(y)) throw ValidationError("hermite_orthonormal: non-finite argument");
  double prev = 1.0;
  if (l == 0) return prev;
  double cur = y;
  for (unsigned k = 1; k < l; ++k) {
    const double next = (y * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

namespace detail {

// H_{m}(x), H_{m-1}(x) and sum_{l<m} H_l(x)^2 in one pass.
struct HermiteSweep {
  double value;
  double previous;
  double christoffel;
};

inline HermiteSweep hermite_sweep(std::size_t m, double x) {
  double prev = 0.0;
  double cur = 1.0;
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    sum_sq += cur * cur;
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(k + 1.0);
    prev = cur;
    cur = next;
  }
  return {cur, prev, sum_sq};
}

}  // namespace detail

/// m-point Gauss-Hermite rule for N(0,1).
///
/// Nodes are the eigenvalues of the Jacobi matrix of the probabilists' recurrence
/// (zero diagonal, off-diagonal sqrt(k)), polished by Newton steps on H_m. Weights
/// are the Christoffel numbers 1 / sum_{l<m} H_l(x)^2, which equal the squared first
/// eigenvector components but keep full relative accuracy in the tails.
inline UnivariateRule gauss_hermite(std::size_t m) {
  if (m < 1 || m > kMaxRulePoints) {
    throw ValidationError("gauss_hermite: point count must be in [1, 200], got " + std::to_string(m));
  }
  UnivariateRule rule;
  rule.level = static_cast<unsigned>(m - 1);
  if (m == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(m - 1));
  for (std::size_t k = 1; k < m; ++k) sub[static_cast<Eigen::Index>(k - 1)] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("gauss_hermite: eigen-solve did not converge");

  std::vector<double> x(solver.eigenvalues().data(), solver.eigenvalues().data() + m);
  const double sqrt_m = std::sqrt(static_cast<double>(m));
  for (double& xi : x) {
    for (int it = 0; it < 8; ++it) {
      const auto s = detail::hermite_sweep(m, xi);
      const double deriv = sqrt_m * s.previous;  // H_m' = sqrt(m) H_{m-1}
      if (deriv == 0.0) break;
      const double step = s.value / deriv;
      xi -= step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(xi))) break;
    }
  }

  rule.nodes.assign(m, 0.0);
  rule.weights.assign(m, 0.0);
  for (std::size_t k = 0; k < m / 2; ++k) {
    const double a = 0.5 * (x[m - 1 - k] - x[k]);
    const double w = 1.0 / detail::hermite_sweep(m, a).christoffel;
    rule.nodes[k] = -a;
    rule.nodes[m - 1 - k] = a;
    rule.weights[k] = w;
    rule.weights[m - 1 - k] = w;
  }
  if (m % 2 == 1) rule.weights[m / 2] = 1.0 / detail::hermite_sweep(m, 0.0).christoffel;

  for (std::size_t k = 0; k < m; ++k) {
    if (!(rule.weights[k] > 0.0) || (k > 0 && !(rule.nodes[k] > rule.nodes[k - 1]))) {
      throw NumericalError("gauss_hermite: degenerate rule for m = " + std::to_string(m));
    }
  }
  return rule;
}

/// Q_nu, cached per level. Thread-safe; each level is built at most once.
inline const UnivariateRule& rule_for_level(unsigned level) {
  if (points_for_level(level) > kMaxRulePoints) {
    throw ValidationError("rule_for_level: level " + std::to_string(level) + " exceeds the point limit");
  }
  static std::array<std::once_flag, kMaxRulePoints> flags;
  static std::array<std::optional<UnivariateRule>, kMaxRulePoints> rules;
  std::call_once(flags[level], [level] { rules[level] = gauss_hermite(points_for_level(level)); });
  return *rules[level];
}

/// sum_k f(nodes_k) weights_k, for scalar or vector valued f.
template <class F>
auto apply_rule(const UnivariateRule& rule, F&& f) {
  using R = std::decay_t<decltype(f(0.0))>;
  R acc = f(rule.nodes[0]);
  if constexpr (std::is_arithmetic_v<R>) {
    acc *= rule.weights[0];
    for (std::size_t k = 1; k < rule.size(); ++k) acc += f(rule.nodes[k]) * rule.weights[k];
  } else {
    for (auto& a : acc) a *= rule.weights[0];
    for (std::size_t k = 1; k < rule.size(); ++k) {
      const R v = f(rule.nodes[k]);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i] * rule.weights[k];
    }
  }
  return acc;
}

struct HermiteBoundEntry {
  unsigned level;
  unsigned degree;
  double value;  // Q_level[H_degree]
};

struct HermiteBoundReport {
  std::vector<HermiteBoundEntry> entries;
  double max_abs = 0.0;
  unsigned argmax_level = 0;
  unsigned argmax_degree = 0;
  std::size_t flagged = 0;  // entries with |value| > 2
};

/// Q_nu[H_l] for all 0 <= nu <= level_max, 0 <= l <= degree_max.
inline HermiteBoundReport hermite_bound_report(unsigned level_max, unsigned degree_max) {
  if (level_max > 50) throw ValidationError("hermite_bound_report: level_max above 50");
  if (degree_max > 500) throw ValidationError("hermite_bound_report: degree_max above 500");
  HermiteBoundReport report;
  report.entries.reserve(static_cast<std::size_t>(level_max + 1) * (degree_max + 1));
  for (unsigned nu = 0; nu <= level_max; ++nu) {
    const auto& rule = rule_for_level(nu);
    for (unsigned l = 0; l <= degree_max; ++l) {
      const double q = apply_rule(rule, [l](double y) { return hermite_orthonormal(l, y); });
      report.entries.push_back({nu, l, q});
      if (std::abs(q) > report.max_abs) {
        report.max_abs = std::abs(q);
        report.argmax_level = nu;
        report.argmax_degree = l;
      }
      if (std::abs(q) > 2.0) ++report.flagged;
    }
  }
  return report;
}

}  // namespace sparseoc
