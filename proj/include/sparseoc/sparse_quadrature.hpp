#pragma once

/*! \file sparse_quadrature.hpp
    \brief Tensorized difference quadrature, sparse quadrature over downward-closed
           index sets, a-priori / a-posteriori indicators, and the greedy adaptive
           construction over the reduced forward neighbor front.

    Delta_nu = prod_j (Q_{nu_j} - Q_{nu_j - 1}) is applied as a single tensor grid of
    per-dimension "difference rules" (nodes of Q_l with +w, nodes of Q_{l-1} with -w),
    which is the expansion of the inclusion-exclusion sum over subsets of the support.
    Dimensions outside the support sit at the level-0 node y_j = 0.

    Quadrature points are identified by keys of (dimension, level, ordinal) triples over
    the dimensions where the node is nonzero. The center node of an odd Gauss-Hermite
    rule is exactly 0 and is keyed like an inactive dimension, so keys and physical
    points coincide.
*/

#include "errors.hpp"
#include "field.hpp"
#include "gauss_hermite.hpp"
#include "multi_index.hpp"
#include "result_ops.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sparseoc {

/// A map from parameters y in R^J into a normed result space.
template <class R>
struct Integrand {
  std::size_t dim = 0;
  std::function<R(std::span<const double>)> evaluate;
  std::function<double(const R&)> norm;
};

/// Integrand evaluation failed at a quadrature node; `node` holds the parameter vector.
class IntegrandFailure : public NumericalError {
 public:
  IntegrandFailure(const std::string& what, std::vector<double> node)
      : NumericalError(what), node_(std::move(node)) {}
  const std::vector<double>& node() const noexcept { return node_; }

 private:
  std::vector<double> node_;
};

using PointKey = std::vector<std::uint64_t>;

inline std::uint64_t pack_node(Dim j, Level level, std::uint32_t ordinal) {
  return (static_cast<std::uint64_t>(j) << 32) | (static_cast<std::uint64_t>(level) << 16) | ordinal;
}

struct PointKeyHash {
  std::size_t operator()(const PointKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ k.size();
    for (std::uint64_t v : k) {
      v ^= v >> 33;
      v *= 0xff51afd7ed558ccdULL;
      v ^= v >> 33;
      h = (h ^ v) * 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

using PointSet = std::unordered_set<PointKey, PointKeyHash>;

/// Memoized integrand values by point key. Safe for concurrent use; a racing
/// duplicate evaluation stores an identical value.
template <class R>
class EvalCache {
 public:
  explicit EvalCache(bool enabled = true) : enabled_(enabled) {}

  R get_or_evaluate(const PointKey& key, std::span<const double> y, const Integrand<R>& psi) {
    if (enabled_) {
      std::lock_guard lock(mutex_);
      auto it = values_.find(key);
      if (it != values_.end()) {
        ++hits_;
        return it->second;
      }
    }
    R value;
    try {
      value = psi.evaluate(y);
    } catch (const std::exception& e) {
      throw IntegrandFailure(std::string("integrand evaluation failed: ") + e.what(), {y.begin(), y.end()});
    }
    std::lock_guard lock(mutex_);
    ++misses_;
    if (enabled_) values_.emplace(key, value);
    return value;
  }

  bool enabled() const noexcept { return enabled_; }
  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  bool enabled_;
  std::mutex mutex_;
  std::unordered_map<PointKey, R, PointKeyHash> values_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

struct DifferenceNode {
  std::uint64_t key;  // 0: node is y_j = 0
  double node;
  double weight;
};

/// Nodes and signed weights of Q_l - Q_{l-1} in dimension j (Q_{-1} = 0).
inline std::vector<DifferenceNode> difference_rule(Dim j, Level l) {
  std::vector<DifferenceNode> out;
  auto append = [&](Level level, double sign) {
    const auto& rule = rule_for_level(level);
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const double x = rule.nodes[k];
      out.push_back({x == 0.0 ? 0 : pack_node(j, level, static_cast<std::uint32_t>(k)), x, sign * rule.weights[k]});
    }
  };
  append(l, 1.0);
  if (l >= 1) append(l - 1, -1.0);
  return out;
}

namespace detail {

inline void check_support(const MultiIndex& nu, std::size_t dim) {
  if (nu.max_dim() > dim) {
    throw ValidationError("index " + nu.to_string() + " activates a dimension beyond J = " + std::to_string(dim));
  }
}

// Calls visit(key, y, weight) for every point of the Delta_nu tensor grid, in odometer order
// with the last supported dimension varying fastest.
template <class Visit>
void for_each_delta_point(const MultiIndex& nu, std::size_t dim, Visit&& visit) {
  const auto& entries = nu.entries();
  std::vector<std::vector<DifferenceNode>> rules;
  rules.reserve(entries.size());
  for (const auto& [j, l] : entries) rules.push_back(difference_rule(j, l));

  std::vector<double> y(dim, 0.0);
  std::vector<std::size_t> cursor(entries.size(), 0);
  PointKey key;
  key.reserve(entries.size());
  while (true) {
    double w = 1.0;
    key.clear();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& dn = rules[k][cursor[k]];
      w *= dn.weight;
      y[entries[k].first - 1] = dn.node;
      if (dn.key != 0) key.push_back(dn.key);
    }
    visit(static_cast<const PointKey&>(key), std::span<const double>(y), w);
    std::size_t k = entries.size();
    while (k > 0) {
      --k;
      if (++cursor[k] < rules[k].size()) break;
      cursor[k] = 0;
      if (k == 0) return;
    }
    if (entries.empty()) return;
  }
}

}  // namespace detail

/// Keys of all points used by Delta_nu.
inline std::vector<PointKey> delta_points(const MultiIndex& nu, std::size_t dim) {
  detail::check_support(nu, dim);
  std::vector<PointKey> keys;
  detail::for_each_delta_point(nu, dim, [&](const PointKey& key, std::span<const double>, double) {
    keys.push_back(key);
  });
  return keys;
}

/// Delta_nu[psi]; every evaluation goes through the cache.
template <class R>
R delta(const MultiIndex& nu, const Integrand<R>& psi, EvalCache<R>& cache) {
  detail::check_support(nu, psi.dim);
  std::optional<R> acc;
  detail::for_each_delta_point(nu, psi.dim, [&](const PointKey& key, std::span<const double> y, double w) {
    const R value = cache.get_or_evaluate(key, y, psi);
    if (!acc) acc = ResultOps<R>::zero_like(value);
    ResultOps<R>::axpy(*acc, w, value);
  });
  return std::move(*acc);
}

/// Q_Lambda[psi] = sum over Lambda (insertion order) of Delta_nu[psi].
template <class R>
R sparse_quadrature(const IndexSet& set, const Integrand<R>& psi, EvalCache<R>& cache) {
  std::optional<R> acc;
  for (const auto& nu : set.members()) {
    const R d = delta(nu, psi, cache);
    if (!acc) acc = ResultOps<R>::zero_like(d);
    ResultOps<R>::axpy(*acc, 1.0, d);
  }
  return std::move(*acc);
}

inline double binomial(Level n, Level k) {
  if (k > n) return 0.0;
  double c = 1.0;
  for (Level i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

/// b_nu = prod_j sum_{l=0}^{r} C(nu_j, l) rho_j^{2l}
inline double apriori_indicator(const MultiIndex& nu, const FieldParams& prm) {
  if (prm.r < 1) throw ValidationError("apriori_indicator: r must be >= 1");
  double b = 1.0;
  for (const auto& [j, l] : nu.entries()) {
    const double rho2 = rho(prm, j) * rho(prm, j);
    double factor = 0.0;
    double power = 1.0;
    for (unsigned k = 0; k <= prm.r; ++k) {
      factor += binomial(l, k) * power;
      power *= rho2;
    }
    b *= factor;
  }
  return b;
}

template <class R>
double aposteriori_indicator(const MultiIndex& nu, const Integrand<R>& psi, EvalCache<R>& cache) {
  return psi.norm(delta(nu, psi, cache));
}

enum class IndicatorMode { apriori, aposteriori };

inline std::string to_string(IndicatorMode mode) {
  return mode == IndicatorMode::apriori ? "apriori" : "aposteriori";
}

inline IndicatorMode indicator_mode_from_string(const std::string& s) {
  if (s == "apriori") return IndicatorMode::apriori;
  if (s == "aposteriori") return IndicatorMode::aposteriori;
  throw ValidationError("unknown indicator mode '" + s + "'");
}

struct AdaptiveOptions {
  std::size_t max_indices = 100;
  /// Stop once every front indicator is below this (a-posteriori mode only).
  std::optional<double> tolerance;
  /// Stop once Lambda uses at least this many unique points.
  std::optional<std::size_t> max_points;
  /// Largest dimension ever activated; 0 means the integrand's dimension.
  Dim dim_cap = 0;
};

template <class R>
struct StepRecord {
  std::size_t step = 0;
  std::size_t n_indices = 0;        // |Lambda|
  std::size_t n_bar_indices = 0;    // |Lambda u N(Lambda)|
  std::size_t n_points_lambda = 0;  // unique points of Lambda
  std::size_t n_points_bar = 0;     // unique points of Lambda u N(Lambda)
  MultiIndex selected;
  double indicator = 0.0;
  R value{};                        // Q_Lambda after this step
};

template <class R>
struct FrontEntry {
  double indicator = 0.0;
  std::optional<R> delta;
};

/// State and history of one adaptive construction.
template <class R>
class AdaptiveRun {
 public:
  IndicatorMode mode = IndicatorMode::apriori;
  Dim dim_cap = 1;
  IndexSet lambda;
  std::map<MultiIndex, FrontEntry<R>> front;  // N(Lambda), canonical order
  R value{};
  std::vector<StepRecord<R>> history;
  PointSet points_lambda;
  PointSet points_bar;

  std::vector<MultiIndex> front_indices() const {
    std::vector<MultiIndex> out;
    out.reserve(front.size());
    for (const auto& [nu, e] : front) out.push_back(nu);
    return out;
  }

  /// Lambda u N(Lambda): members of Lambda in insertion order, then the front in canonical order.
  IndexSet lambda_bar() const {
    std::vector<MultiIndex> all = lambda.members();
    for (const auto& [nu, e] : front) all.push_back(nu);
    return IndexSet(all);
  }

  /// Q over Lambda u N(Lambda), evaluating any front differences not yet computed.
  R reference_value(const Integrand<R>& psi, EvalCache<R>& cache) {
    R ref = value;
    for (auto& [nu, e] : front) {
      if (!e.delta) e.delta = delta(nu, psi, cache);
      ResultOps<R>::axpy(ref, 1.0, *e.delta);
    }
    return ref;
  }
};

namespace detail {

template <class R>
void add_front_entry(AdaptiveRun<R>& run, const MultiIndex& mu, const Integrand<R>& psi, const FieldParams& prm,
                     EvalCache<R>& cache) {
  FrontEntry<R> entry;
  if (run.mode == IndicatorMode::apriori) {
    entry.indicator = apriori_indicator(mu, prm);
  } else {
    entry.delta = delta(mu, psi, cache);
    entry.indicator = psi.norm(*entry.delta);
  }
  for (auto& key : delta_points(mu, psi.dim)) run.points_bar.insert(std::move(key));
  run.front.emplace(mu, std::move(entry));
}

// Adds the forward neighbors created by inserting nu into Lambda.
template <class R>
void extend_front(AdaptiveRun<R>& run, const MultiIndex& nu, const Integrand<R>& psi, const FieldParams& prm,
                  EvalCache<R>& cache) {
  const Dim limit = active_dim_limit(run.lambda, run.dim_cap);
  for (Dim j = 1; j <= limit; ++j) {
    MultiIndex mu = nu.incremented(j);
    // beyond the largest tabulated rule; never a candidate
    if (points_for_level(mu.level(j)) > kMaxRulePoints) continue;
    if (!run.front.contains(mu) && run.lambda.is_admissible(mu)) add_front_entry(run, mu, psi, prm, cache);
  }
  const MultiIndex newest = MultiIndex::unit(limit);
  if (!run.front.contains(newest) && run.lambda.is_admissible(newest)) add_front_entry(run, newest, psi, prm, cache);
}

template <class R>
void record_step(AdaptiveRun<R>& run, std::size_t step, const MultiIndex& selected, double indicator) {
  StepRecord<R> rec;
  rec.step = step;
  rec.n_indices = run.lambda.size();
  rec.n_bar_indices = run.lambda.size() + run.front.size();
  rec.n_points_lambda = run.points_lambda.size();
  rec.n_points_bar = run.points_bar.size();
  rec.selected = selected;
  rec.indicator = indicator;
  rec.value = run.value;
  run.history.push_back(std::move(rec));
}

}  // namespace detail

/// Greedy adaptive sparse quadrature.
///
/// Starts from Lambda = {0}, Q = psi(0). While |Lambda| < max_indices, picks from the
/// reduced forward neighbor front the index with the smallest b_nu (a-priori) or the
/// largest ||Delta_nu[psi]|| (a-posteriori), ties going to the first in canonical order,
/// and adds its difference to Q. The front is maintained incrementally.
template <class R>
AdaptiveRun<R> adaptive_construct(const Integrand<R>& psi, const FieldParams& prm, IndicatorMode mode,
                                  const AdaptiveOptions& options, EvalCache<R>& cache) {
  if (options.max_indices < 1) throw ValidationError("adaptive_construct: max_indices must be >= 1");
  if (psi.dim < 1) throw ValidationError("adaptive_construct: integrand dimension must be >= 1");
  AdaptiveRun<R> run;
  run.mode = mode;
  run.dim_cap = options.dim_cap == 0 ? static_cast<Dim>(psi.dim) : std::min<Dim>(options.dim_cap, static_cast<Dim>(psi.dim));

  const MultiIndex zero;
  run.value = delta(zero, psi, cache);
  for (auto& key : delta_points(zero, psi.dim)) {
    run.points_bar.insert(key);
    run.points_lambda.insert(std::move(key));
  }
  detail::extend_front(run, zero, psi, prm, cache);
  detail::record_step(run, 0, zero, mode == IndicatorMode::apriori ? 1.0 : psi.norm(run.value));

  for (std::size_t step = 1; run.lambda.size() < options.max_indices && !run.front.empty(); ++step) {
    if (options.max_points && run.points_lambda.size() >= *options.max_points) break;
    auto best = run.front.begin();
    for (auto it = std::next(run.front.begin()); it != run.front.end(); ++it) {
      const bool better = mode == IndicatorMode::apriori ? it->second.indicator < best->second.indicator
                                                         : it->second.indicator > best->second.indicator;
      if (better) best = it;
    }
    if (mode == IndicatorMode::aposteriori && options.tolerance && best->second.indicator < *options.tolerance) break;

    const MultiIndex nu = best->first;
    const double indicator = best->second.indicator;
    const R d = best->second.delta ? std::move(*best->second.delta) : delta(nu, psi, cache);
    run.front.erase(best);
    run.lambda.insert(nu);
    ResultOps<R>::axpy(run.value, 1.0, d);
    for (auto& key : delta_points(nu, psi.dim)) run.points_lambda.insert(std::move(key));
    detail::extend_front(run, nu, psi, prm, cache);
    detail::record_step(run, step, nu, indicator);
  }
  return run;
}

template <class R>
AdaptiveRun<R> adaptive_construct(const Integrand<R>& psi, const FieldParams& prm, IndicatorMode mode,
                                  const AdaptiveOptions& options) {
  EvalCache<R> cache;
  return adaptive_construct(psi, prm, mode, options, cache);
}

}  // namespace sparseoc
