#pragma once

/*! \file montecarlo.hpp
    \brief Seeded Monte Carlo baseline for the same expectations.

    Sample i, coordinate j is a pure function of (seed, i, j): a splitmix64-style
    counter hash mapped to (0, 1) and pushed through the inverse normal CDF. Any
    sample can be regenerated independently of evaluation order.
*/

#include "errors.hpp"
#include "result_ops.hpp"
#include "sparse_quadrature.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace sparseoc {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based uniform in the open interval (0, 1).
inline double counter_uniform(std::uint64_t seed, std::uint64_t sample, std::uint64_t coord) noexcept {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) ^ sample) ^ (coord * 0xd1b54a32d192ed03ULL));
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double standard_normal_quantile(double u) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

/// Sample `sample` of a standard normal vector of length dim.
inline std::vector<double> normal_sample(std::uint64_t seed, std::uint64_t sample, std::size_t dim) {
  std::vector<double> y(dim);
  for (std::size_t j = 0; j < dim; ++j) y[j] = standard_normal_quantile(counter_uniform(seed, sample, j));
  return y;
}

/// Seed of trial t derived from a study seed.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) noexcept {
  return splitmix64(seed ^ splitmix64(0x7f4a7c159e3779b9ULL + trial));
}

/// Running sample means of psi at each checkpoint of an increasing schedule.
/// The mean is updated as m_k = m_{k-1} + (psi_k - m_{k-1}) / k in sample order.
template <class R>
std::vector<R> mc_running_estimates(const Integrand<R>& psi, std::span<const std::size_t> schedule,
                                    std::uint64_t seed) {
  std::vector<R> out;
  if (schedule.empty()) return out;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    if (schedule[k] < 1 || (k > 0 && schedule[k] <= schedule[k - 1])) {
      throw ValidationError("Monte Carlo schedule must be positive and strictly increasing");
    }
  }
  std::optional<R> mean;
  std::size_t next = 0;
  for (std::size_t i = 0; i < schedule.back(); ++i) {
    const auto y = normal_sample(seed, i, psi.dim);
    R value;
    try {
      value = psi.evaluate(y);
    } catch (const std::exception& e) {
      throw IntegrandFailure(std::string("integrand evaluation failed: ") + e.what(), y);
    }
    if (!mean) {
      mean = std::move(value);
    } else {
      ResultOps<R>::axpy(*mean, 1.0 / static_cast<double>(i + 1), ResultOps<R>::subtract(value, *mean));
    }
    if (i + 1 == schedule[next]) {
      out.push_back(*mean);
      ++next;
    }
  }
  return out;
}

/// (1/n) sum_{i<n} psi(y_i); deterministic in (seed, n).
template <class R>
R mc_estimate(const Integrand<R>& psi, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("mc_estimate: need at least one sample");
  const std::size_t schedule[] = {n};
  return mc_running_estimates(psi, schedule, seed).front();
}

struct McConfig {
  std::vector<std::size_t> schedule;  // strictly increasing sample counts
  std::size_t trials = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (schedule.empty()) throw ValidationError("Monte Carlo schedule is empty");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      if (schedule[k] < 1 || (k > 0 && schedule[k] <= schedule[k - 1])) {
        throw ValidationError("Monte Carlo schedule must be positive and strictly increasing");
      }
    }
    if (trials < 1) throw ValidationError("Monte Carlo needs at least one trial");
  }

  /// 2^lo, ..., 2^hi
  static std::vector<std::size_t> geometric(unsigned lo, unsigned hi) {
    std::vector<std::size_t> s;
    for (unsigned k = lo; k <= hi; ++k) s.push_back(std::size_t{1} << k);
    return s;
  }
};

struct McErrorRow {
  std::size_t n_samples;
  std::size_t trial;
  double error;
};

struct McStudy {
  std::vector<McErrorRow> rows;
  std::vector<std::size_t> n_samples;
  std::vector<double> mean_error;  // trial average per schedule entry
  double slope = 0.0;              // least squares slope of log(mean_error) vs log(n)
};

/// Least squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValidationError("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw ValidationError("loglog_slope: abscissae are all equal");
  return sxy / sxx;
}

/// Trial-averaged error ||estimate - reference|| at every schedule entry.
template <class R>
McStudy mc_convergence_study(const Integrand<R>& psi, const McConfig& config, const R& reference) {
  config.validate();
  McStudy study;
  study.n_samples = config.schedule;
  study.mean_error.assign(config.schedule.size(), 0.0);
  for (std::size_t t = 0; t < config.trials; ++t) {
    const auto estimates = mc_running_estimates(psi, config.schedule, trial_seed(config.seed, t));
    for (std::size_t k = 0; k < estimates.size(); ++k) {
      const double err = psi.norm(ResultOps<R>::subtract(estimates[k], reference));
      study.rows.push_back({config.schedule[k], t, err});
      study.mean_error[k] += err / static_cast<double>(config.trials);
    }
  }
  if (config.schedule.size() >= 2) {
    std::vector<double> xs(config.schedule.begin(), config.schedule.end());
    study.slope = loglog_slope(xs, study.mean_error);
  }
  return study;
}

}  // namespace sparseoc
