#pragma once

#include <cstddef>
#include <vector>

namespace sparseoc {

/// Linear-space operations needed to accumulate quadrature sums of integrand values.
/// Specialize for new result types: zero_like, axpy (acc += a * x), subtract (a - b).
template <class R>
struct ResultOps;

template <>
struct ResultOps<double> {
  static double zero_like(double) { return 0.0; }
  static void axpy(double& acc, double a, double x) { acc += a * x; }
  static double subtract(double a, double b) { return a - b; }
};

template <>
struct ResultOps<std::vector<double>> {
  static std::vector<double> zero_like(const std::vector<double>& x) { return std::vector<double>(x.size(), 0.0); }
  static void axpy(std::vector<double>& acc, double a, const std::vector<double>& x) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += a * x[i];
  }
  static std::vector<double> subtract(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
  }
};

}  // namespace sparseoc
