#pragma once

/*! \file experiments.hpp
    \brief Experiment configuration, presets and drivers writing CSV / JSON results.

    The model problem: mesh of (0, 1) with n nodes, lognormal field of J sine modes,
    data u_d generated from the control z_d = sin(pi x) with kappa = 0, regularization
    beta. Targets are z at x = 0.5 (scalar), the control field z (L2 norm) or the pair
    w = (u, v) (W norm).
*/

#include "csv.hpp"
#include "errors.hpp"
#include "fem.hpp"
#include "field.hpp"
#include "montecarlo.hpp"
#include "multi_index.hpp"
#include "result_ops.hpp"
#include "sparse_quadrature.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace sparseoc {

enum class Target { control_midpoint, control_field, pair };

inline std::string to_string(Target t) {
  switch (t) {
    case Target::control_midpoint: return "control_midpoint";
    case Target::control_field: return "control_field";
    case Target::pair: return "pair";
  }
  return "?";
}

inline Target target_from_string(const std::string& s) {
  if (s == "control_midpoint") return Target::control_midpoint;
  if (s == "control_field") return Target::control_field;
  if (s == "pair") return Target::pair;
  throw ValidationError("unknown target '" + s + "'");
}

/// lambda_bar: Q over the final Lambda u N(Lambda) of each mode.
/// oversampled: the same, from a run with twice the index budget.
enum class ReferencePolicy { lambda_bar, oversampled };

inline std::string to_string(ReferencePolicy p) { return p == ReferencePolicy::lambda_bar ? "lambda_bar" : "oversampled"; }

inline ReferencePolicy reference_policy_from_string(const std::string& s) {
  if (s == "lambda_bar") return ReferencePolicy::lambda_bar;
  if (s == "oversampled") return ReferencePolicy::oversampled;
  throw ValidationError("unknown reference policy '" + s + "'");
}

struct ExperimentConfig {
  std::size_t n = 257;           // mesh nodes, boundary included
  FieldParams field{2.0, 257, 0.1, 2, 1.0, {}};
  bool rescale_auto = false;     // replace field.rescale by auto_rescale(field)
  double beta = 1e-4;
  double source = 0.0;           // constant f
  Target target = Target::control_midpoint;
  std::vector<IndicatorMode> modes{IndicatorMode::apriori, IndicatorMode::aposteriori};
  std::size_t n_max = 2000;      // index budget
  std::optional<std::size_t> max_points;
  double fit_fraction = 0.5;     // rate fits use steps with |Lambda| <= fit_fraction * final |Lambda|
  ReferencePolicy reference = ReferencePolicy::lambda_bar;
  McConfig mc{McConfig::geometric(6, 14), 10, 20240601};
  std::size_t samples = 100;
  std::uint64_t seed = 20240601;
  std::string output_dir = "out";

  void validate() const {
    if (n < 3) throw ValidationError("config: n must be >= 3");
    field.validate();
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("config: beta must be > 0");
    if (!std::isfinite(source)) throw ValidationError("config: source must be finite");
    if (target == Target::control_midpoint && n % 2 == 0) {
      throw ValidationError("config: the midpoint target needs an odd number of mesh nodes");
    }
    if (modes.empty()) throw ValidationError("config: no indicator modes");
    if (n_max < 2) throw ValidationError("config: n_max must be >= 2");
    if (max_points && *max_points < 1) throw ValidationError("config: max_points must be positive");
    if (!(fit_fraction > 0.0 && fit_fraction <= 1.0)) throw ValidationError("config: fit_fraction must be in (0, 1]");
    mc.validate();
    if (samples < 1) throw ValidationError("config: samples must be >= 1");
  }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.n == b.n && a.field == b.field && a.rescale_auto == b.rescale_auto && a.beta == b.beta &&
           a.source == b.source && a.target == b.target && a.modes == b.modes && a.n_max == b.n_max &&
           a.max_points == b.max_points && a.fit_fraction == b.fit_fraction && a.reference == b.reference &&
           a.mc.schedule == b.mc.schedule && a.mc.trials == b.mc.trials && a.mc.seed == b.mc.seed &&
           a.samples == b.samples && a.seed == b.seed && a.output_dir == b.output_dir;
  }
};

/// n = J = 257, 2000 indices.
inline ExperimentConfig desk_preset() { return ExperimentConfig{}; }

/// n = J = 1025, stopped at 10^4 quadrature points.
inline ExperimentConfig paper_preset() {
  ExperimentConfig c;
  c.n = 1025;
  c.field.dim = 1025;
  c.n_max = 100000;
  c.max_points = 10000;
  c.mc.schedule = McConfig::geometric(6, 16);
  return c;
}

inline ExperimentConfig preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ValidationError("unknown preset '" + name + "'");
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["n"] = c.n;
  j["field"] = {{"alpha", c.field.alpha}, {"dim", c.field.dim}, {"epsilon", c.field.epsilon}, {"r", c.field.r}};
  if (c.rescale_auto) {
    j["field"]["rescale"] = "auto";
  } else {
    j["field"]["rescale"] = c.field.rescale;
  }
  j["beta"] = c.beta;
  j["source"] = c.source;
  j["target"] = to_string(c.target);
  j["modes"] = nlohmann::json::array();
  for (auto m : c.modes) j["modes"].push_back(to_string(m));
  j["n_max"] = c.n_max;
  j["max_points"] = c.max_points ? nlohmann::json(*c.max_points) : nlohmann::json(nullptr);
  j["fit_fraction"] = c.fit_fraction;
  j["reference"] = to_string(c.reference);
  j["mc"] = {{"schedule", c.mc.schedule}, {"trials", c.mc.trials}, {"seed", c.mc.seed}};
  j["samples"] = c.samples;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

namespace detail {

template <class T>
T get_number(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  const auto& v = obj[key];
  if (!v.is_number()) throw ValidationError(std::string("config: '") + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (v.is_number_float() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ValidationError(std::string("config: '") + key + "' must be a nonnegative integer");
    }
  }
  return v.get<T>();
}

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ValidationError(std::string("config: unknown key '") + k + "' in " + where);
    }
  }
}

}  // namespace detail

/// Keys present in `j` override `base`; absent keys keep the base value.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {}) {
  using detail::get_number;
  if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
  detail::check_keys(j,
                     {"n", "field", "beta", "source", "target", "modes", "n_max", "max_points", "fit_fraction",
                      "reference", "mc", "samples", "seed", "output_dir"},
                     "config");
  ExperimentConfig c = std::move(base);
  c.n = get_number(j, "n", c.n);
  if (j.contains("field")) {
    const auto& f = j["field"];
    if (!f.is_object()) throw ValidationError("config: 'field' must be an object");
    detail::check_keys(f, {"alpha", "dim", "epsilon", "r", "rescale"}, "field");
    c.field.alpha = get_number(f, "alpha", c.field.alpha);
    c.field.dim = get_number(f, "dim", c.field.dim);
    c.field.epsilon = get_number(f, "epsilon", c.field.epsilon);
    c.field.r = get_number(f, "r", c.field.r);
    if (f.contains("rescale")) {
      if (f["rescale"].is_string()) {
        if (f["rescale"].get<std::string>() != "auto") throw ValidationError("config: rescale must be a number or \"auto\"");
        c.rescale_auto = true;
      } else {
        c.field.rescale = get_number(f, "rescale", c.field.rescale);
        c.rescale_auto = false;
      }
    }
  }
  c.beta = get_number(j, "beta", c.beta);
  c.source = get_number(j, "source", c.source);
  if (j.contains("target")) c.target = target_from_string(j["target"].get<std::string>());
  if (j.contains("modes")) {
    if (!j["modes"].is_array()) throw ValidationError("config: 'modes' must be an array");
    c.modes.clear();
    for (const auto& m : j["modes"]) c.modes.push_back(indicator_mode_from_string(m.get<std::string>()));
  }
  c.n_max = get_number(j, "n_max", c.n_max);
  if (j.contains("max_points")) {
    c.max_points = j["max_points"].is_null() ? std::nullopt
                                             : std::optional<std::size_t>(get_number<std::size_t>(j, "max_points", 0));
  }
  c.fit_fraction = get_number(j, "fit_fraction", c.fit_fraction);
  if (j.contains("reference")) c.reference = reference_policy_from_string(j["reference"].get<std::string>());
  if (j.contains("mc")) {
    const auto& m = j["mc"];
    if (!m.is_object()) throw ValidationError("config: 'mc' must be an object");
    detail::check_keys(m, {"schedule", "trials", "seed"}, "mc");
    if (m.contains("schedule")) {
      c.mc.schedule.clear();
      for (const auto& s : m["schedule"]) {
        if (!s.is_number_unsigned()) throw ValidationError("config: mc.schedule entries must be positive integers");
        c.mc.schedule.push_back(s.get<std::size_t>());
      }
    }
    c.mc.trials = get_number(m, "trials", c.mc.trials);
    c.mc.seed = get_number(m, "seed", c.mc.seed);
  }
  c.samples = get_number(j, "samples", c.samples);
  c.seed = get_number(j, "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

/// Field prm with the rescale factor resolved.
inline FieldParams resolve_field(const ExperimentConfig& c) {
  return c.rescale_auto ? auto_rescale(c.field) : c.field;
}

inline std::vector<double> make_source(const ExperimentConfig& c) {
  return std::vector<double>(Mesh(c.n).interior(), c.source);
}

inline std::vector<double> target_control(const Mesh& mesh) {
  return interpolate_interior(mesh, [](double x) { return std::sin(std::numbers::pi * x); });
}

/// u_d: state of the control z_d = sin(pi x) with kappa = 0.
inline std::vector<double> make_synthetic_data(const ExperimentConfig& c) {
  const Mesh mesh(c.n);
  FieldParams flat = c.field;
  flat.dim = 1;
  const std::vector<double> y0{0.0};
  return solve_state(mesh, flat, y0, make_source(c), target_control(mesh));
}

inline std::shared_ptr<const OptimalityProblem> make_problem(const ExperimentConfig& c) {
  c.validate();
  return std::make_shared<const OptimalityProblem>(Mesh(c.n), resolve_field(c), make_source(c),
                                                   make_synthetic_data(c), c.beta);
}

/// Interior index of the node at x = 0.5.
inline std::size_t midpoint_index(const Mesh& mesh) {
  if (mesh.n % 2 == 0) throw ValidationError("x = 0.5 is not a mesh node for even n");
  return (mesh.n - 1) / 2 - 1;
}

inline Integrand<double> midpoint_control_integrand(std::shared_ptr<const OptimalityProblem> p) {
  const std::size_t mid = midpoint_index(p->mesh());
  const std::size_t dim = p->sampler().dim();
  return {dim, [p, mid](std::span<const double> y) { return -p->solve(y).v[mid] / p->beta(); },
          [](const double& v) { return std::abs(v); }};
}

inline Integrand<std::vector<double>> control_field_integrand(std::shared_ptr<const OptimalityProblem> p) {
  const std::size_t dim = p->sampler().dim();
  return {dim, [p](std::span<const double> y) { return p->control(p->solve(y)); },
          [p](const std::vector<double>& z) { return l2_norm(p->mesh(), z); }};
}

inline Integrand<StateAdjointPair> pair_integrand(std::shared_ptr<const OptimalityProblem> p) {
  const std::size_t dim = p->sampler().dim();
  return {dim, [p](std::span<const double> y) { return p->solve(y); },
          [p](const StateAdjointPair& w) { return w_norm(p->mesh(), w, p->beta()); }};
}

// ---------------------------------------------------------------------------
// convergence

struct ModeSummary {
  IndicatorMode mode = IndicatorMode::apriori;
  double slope_vs_indices = 0.0;
  double slope_vs_points = 0.0;
  std::size_t fit_steps = 0;
  std::size_t n_indices = 0;
  std::size_t n_points_lambda = 0;
  std::size_t n_points_bar = 0;
  std::size_t n_evaluations = 0;  // integrand evaluations, including the reference
  double final_error = 0.0;
  double mc_error_at_points = 0.0;  // trial-mean MC error with n_points_lambda samples
};

struct ConvergenceReport {
  std::vector<ModeSummary> modes;
  McStudy mc;
};

/// Error of each history entry; the step at which |Lambda| first exceeds fit_fraction * final bounds the fit.
struct ErrorSeries {
  std::vector<std::size_t> n_indices;
  std::vector<std::size_t> n_points;
  std::vector<double> error;
};

inline std::pair<double, double> fit_rates(const ErrorSeries& s, double fit_fraction, std::size_t* used = nullptr) {
  const std::size_t last = s.n_indices.empty() ? 0 : s.n_indices.back();
  const double cutoff = fit_fraction * static_cast<double>(last);
  std::vector<double> xi, xp, ye;
  for (std::size_t k = 0; k < s.error.size(); ++k) {
    if (static_cast<double>(s.n_indices[k]) > cutoff) break;
    if (!(s.error[k] > 0.0)) continue;
    xi.push_back(static_cast<double>(s.n_indices[k]));
    xp.push_back(static_cast<double>(s.n_points[k]));
    ye.push_back(s.error[k]);
  }
  if (used) *used = ye.size();
  return {loglog_slope(xi, ye), loglog_slope(xp, ye)};
}

namespace detail {

template <class R>
double value_column(const Integrand<R>& psi, const R& v) {
  if constexpr (std::is_same_v<R, double>) {
    return v;
  } else {
    return psi.norm(v);
  }
}

template <class R>
std::string value_column_name() {
  return std::is_same_v<R, double> ? "quadrature_value" : "value_norm";
}

}  // namespace detail

/// History CSV: step, N_indices, n_points_lambda, n_points_lambda_bar, selected_index,
/// indicator_value, quadrature_value | value_norm, and error when a reference is given.
template <class R>
void write_history_csv(const std::filesystem::path& path, const AdaptiveRun<R>& run, const Integrand<R>& psi,
                       const R* reference = nullptr) {
  std::vector<std::string> header{"step",           "N_indices",       "n_points_lambda", "n_points_lambda_bar",
                                  "selected_index", "indicator_value", detail::value_column_name<R>()};
  if (reference) header.push_back("error");
  CsvWriter csv(path, header);
  for (const auto& h : run.history) {
    auto row = csv.row();
    row << h.step << h.n_indices << h.n_points_lambda << h.n_points_bar << to_json_value(h.selected).dump()
        << h.indicator << detail::value_column(psi, h.value);
    if (reference) row << psi.norm(ResultOps<R>::subtract(h.value, *reference));
  }
}

inline void write_mc_csv(const std::filesystem::path& path, const McStudy& study) {
  CsvWriter csv(path, {"n_samples", "trial", "error"});
  for (const auto& r : study.rows) csv.row() << r.n_samples << r.trial << r.error;
  csv.row() << "slope" << "" << study.slope;
}

inline nlohmann::json to_json(const ModeSummary& m) {
  return {{"mode", to_string(m.mode)},
          {"slope_vs_indices", m.slope_vs_indices},
          {"slope_vs_points", m.slope_vs_points},
          {"fit_steps", m.fit_steps},
          {"N_indices", m.n_indices},
          {"n_points_lambda", m.n_points_lambda},
          {"n_points_lambda_bar", m.n_points_bar},
          {"n_evaluations", m.n_evaluations},
          {"final_error", m.final_error},
          {"mc_error_at_points", m.mc_error_at_points}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

/// Trial-mean MC error with n samples.
template <class R>
double mc_mean_error(const Integrand<R>& psi, std::size_t n, const McConfig& mc, const R& reference) {
  McConfig one = mc;
  one.schedule = {n};
  return mc_convergence_study(psi, one, reference).mean_error.front();
}

template <class R>
struct ModeRun {
  AdaptiveRun<R> run;
  R reference;
  std::size_t evaluations = 0;
};

template <class R>
ModeRun<R> run_mode(const Integrand<R>& psi, const FieldParams& prm, IndicatorMode mode, const ExperimentConfig& c) {
  AdaptiveOptions opt;
  opt.max_indices = c.n_max;
  opt.max_points = c.max_points;
  EvalCache<R> cache;
  ModeRun<R> out{adaptive_construct(psi, prm, mode, opt, cache), R{}, 0};
  if (c.reference == ReferencePolicy::lambda_bar) {
    out.reference = out.run.reference_value(psi, cache);
  } else {
    AdaptiveOptions big = opt;
    big.max_indices = 2 * c.n_max;
    if (big.max_points) big.max_points = 2 * *big.max_points;
    auto ref_run = adaptive_construct(psi, prm, mode, big, cache);
    out.reference = ref_run.reference_value(psi, cache);
  }
  out.evaluations = cache.misses();
  return out;
}

template <class R>
ErrorSeries error_series(const AdaptiveRun<R>& run, const Integrand<R>& psi, const R& reference) {
  ErrorSeries s;
  for (const auto& h : run.history) {
    s.n_indices.push_back(h.n_indices);
    s.n_points.push_back(h.n_points_lambda);
    s.error.push_back(psi.norm(ResultOps<R>::subtract(h.value, reference)));
  }
  return s;
}

/// Both indicator modes, errors against the reference policy, the MC study against the
/// reference of the last mode, and MC errors at the final point counts of every mode.
/// Writes convergence_<mode>.csv, mc.csv and summary.json into `out` when non-empty.
template <class R>
ConvergenceReport run_convergence(const ExperimentConfig& c, const Integrand<R>& psi, const std::filesystem::path& out,
                                  bool with_mc = true) {
  c.validate();
  if (!out.empty()) std::filesystem::create_directories(out);
  const FieldParams prm = resolve_field(c);
  ConvergenceReport report;
  std::optional<R> mc_reference;
  std::vector<ModeRun<R>> runs;
  for (auto mode : c.modes) {
    auto mr = run_mode(psi, prm, mode, c);
    const auto series = error_series(mr.run, psi, mr.reference);
    ModeSummary m;
    m.mode = mode;
    std::tie(m.slope_vs_indices, m.slope_vs_points) = fit_rates(series, c.fit_fraction, &m.fit_steps);
    m.n_indices = mr.run.lambda.size();
    m.n_points_lambda = mr.run.points_lambda.size();
    m.n_points_bar = mr.run.points_bar.size();
    m.n_evaluations = mr.evaluations;
    m.final_error = series.error.back();
    if (!out.empty()) write_history_csv(out / ("convergence_" + to_string(mode) + ".csv"), mr.run, psi, &mr.reference);
    report.modes.push_back(m);
    mc_reference = mr.reference;
    runs.push_back(std::move(mr));
  }
  if (with_mc) {
    report.mc = mc_convergence_study(psi, c.mc, *mc_reference);
    for (std::size_t k = 0; k < runs.size(); ++k) {
      report.modes[k].mc_error_at_points =
          mc_mean_error(psi, report.modes[k].n_points_lambda, c.mc, runs[k].reference);
    }
    if (!out.empty()) write_mc_csv(out / "mc.csv", report.mc);
  }
  if (!out.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : report.modes) j.push_back(to_json(m));
    nlohmann::json summary{{"target", to_string(c.target)}, {"modes", j}};
    if (with_mc) summary["mc_slope"] = report.mc.slope;
    write_json(out / "summary.json", summary);
  }
  return report;
}

/// Dispatches on the configured target.
inline ConvergenceReport run_convergence(const ExperimentConfig& c, const std::filesystem::path& out,
                                         bool with_mc = true) {
  const auto p = make_problem(c);
  switch (c.target) {
    case Target::control_midpoint: return run_convergence(c, midpoint_control_integrand(p), out, with_mc);
    case Target::control_field: return run_convergence(c, control_field_integrand(p), out, with_mc);
    case Target::pair: return run_convergence(c, pair_integrand(p), out, with_mc);
  }
  throw ValidationError("unknown target");
}

/// MC study only, against the reference of an a-posteriori sparse run.
template <class R>
McStudy run_mc(const ExperimentConfig& c, const Integrand<R>& psi, const std::filesystem::path& out) {
  c.validate();
  const auto mr = run_mode(psi, resolve_field(c), IndicatorMode::aposteriori, c);
  auto study = mc_convergence_study(psi, c.mc, mr.reference);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_mc_csv(out / "mc.csv", study);
  }
  return study;
}

inline McStudy run_mc(const ExperimentConfig& c, const std::filesystem::path& out) {
  const auto p = make_problem(c);
  switch (c.target) {
    case Target::control_midpoint: return run_mc(c, midpoint_control_integrand(p), out);
    case Target::control_field: return run_mc(c, control_field_integrand(p), out);
    case Target::pair: return run_mc(c, pair_integrand(p), out);
  }
  throw ValidationError("unknown target");
}

// ---------------------------------------------------------------------------
// samples

struct SampleCurves {
  std::vector<double> x;                   // all mesh nodes
  std::vector<std::vector<double>> u, z;   // per sample, boundary zeros included
  std::vector<double> mean_u, mean_z;
  double mean_control_distance = 0.0;      // ||mean z - z_d||_L2 / ||z_d||_L2
};

inline std::vector<double> with_boundary(std::span<const double> interior) {
  std::vector<double> full(interior.size() + 2, 0.0);
  std::copy(interior.begin(), interior.end(), full.begin() + 1);
  return full;
}

/// Solves the optimality system at each parameter vector.
inline SampleCurves sample_curves(const OptimalityProblem& p, const std::vector<std::vector<double>>& ys) {
  if (ys.empty()) throw ValidationError("samples: need at least one parameter vector");
  const Mesh& mesh = p.mesh();
  SampleCurves s;
  for (std::size_t i = 0; i < mesh.n; ++i) s.x.push_back(mesh.x(i));
  std::vector<double> sum_u(mesh.interior(), 0.0), sum_z(mesh.interior(), 0.0);
  for (std::size_t k = 0; k < ys.size(); ++k) {
    StateAdjointPair w;
    try {
      w = p.solve(ys[k]);
    } catch (const NumericalError& e) {
      throw NumericalError("sample " + std::to_string(k) + ": " + e.what());
    }
    const auto z = p.control(w);
    for (std::size_t i = 0; i < z.size(); ++i) {
      sum_u[i] += w.u[i];
      sum_z[i] += z[i];
    }
    s.u.push_back(with_boundary(w.u));
    s.z.push_back(with_boundary(z));
  }
  const double inv = 1.0 / static_cast<double>(ys.size());
  for (auto& v : sum_u) v *= inv;
  for (auto& v : sum_z) v *= inv;
  const auto zd = target_control(mesh);
  s.mean_control_distance = l2_norm(mesh, ResultOps<std::vector<double>>::subtract(sum_z, zd)) / l2_norm(mesh, zd);
  s.mean_u = with_boundary(sum_u);
  s.mean_z = with_boundary(sum_z);
  return s;
}

/// Curves in long form: sample, x, u, z; the sample means carry sample = "mean".
inline void write_samples_csv(const std::filesystem::path& path, const SampleCurves& s) {
  CsvWriter csv(path, {"sample", "x", "u", "z"});
  for (std::size_t k = 0; k < s.u.size(); ++k) {
    for (std::size_t i = 0; i < s.x.size(); ++i) csv.row() << k << s.x[i] << s.u[k][i] << s.z[k][i];
  }
  for (std::size_t i = 0; i < s.x.size(); ++i) csv.row() << "mean" << s.x[i] << s.mean_u[i] << s.mean_z[i];
}

inline SampleCurves run_samples(const ExperimentConfig& c, std::size_t n_samples, std::uint64_t seed,
                                const std::filesystem::path& out) {
  if (n_samples < 1) throw ValidationError("samples: n_samples must be >= 1");
  const auto p = make_problem(c);
  std::vector<std::vector<double>> ys;
  for (std::size_t k = 0; k < n_samples; ++k) ys.push_back(normal_sample(seed, k, p->sampler().dim()));
  auto s = sample_curves(*p, ys);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_samples_csv(out / "samples.csv", s);
    write_json(out / "samples_summary.json", {{"n_samples", n_samples},
                                              {"seed", seed},
                                              {"mean_control_relative_l2_distance", s.mean_control_distance}});
  }
  return s;
}

// ---------------------------------------------------------------------------
// levels

struct LevelRow {
  Dim dimension;
  Level level;              // max nu_j over Lambda u N(Lambda)
  bool activated_in_lambda; // level >= 2
};

template <class R>
std::vector<LevelRow> level_report(const AdaptiveRun<R>& run, std::size_t dims) {
  std::vector<Level> levels(dims, 0);
  auto visit = [&](const MultiIndex& nu) {
    for (const auto& [j, l] : nu.entries()) {
      if (j <= dims) levels[j - 1] = std::max(levels[j - 1], l);
    }
  };
  for (const auto& nu : run.lambda.members()) visit(nu);
  for (const auto& [nu, e] : run.front) visit(nu);
  std::vector<LevelRow> rows;
  for (std::size_t j = 0; j < dims; ++j) rows.push_back({static_cast<Dim>(j + 1), levels[j], levels[j] >= 2});
  return rows;
}

inline void write_levels_csv(const std::filesystem::path& path, const std::vector<LevelRow>& rows) {
  CsvWriter csv(path, {"dimension", "level", "activated_in_lambda"});
  for (const auto& r : rows) {
    csv.row() << static_cast<std::size_t>(r.dimension) << static_cast<std::size_t>(r.level)
              << static_cast<int>(r.activated_in_lambda);
  }
}

/// Adaptive runs in every configured mode; writes levels_<mode>.csv and lambda_<mode>.json.
template <class R>
std::vector<std::vector<LevelRow>> run_levels(const ExperimentConfig& c, const Integrand<R>& psi,
                                              const std::filesystem::path& out) {
  c.validate();
  const FieldParams prm = resolve_field(c);
  AdaptiveOptions opt;
  opt.max_indices = c.n_max;
  opt.max_points = c.max_points;
  std::vector<std::vector<LevelRow>> all;
  if (!out.empty()) std::filesystem::create_directories(out);
  for (auto mode : c.modes) {
    const auto run = adaptive_construct(psi, prm, mode, opt);
    auto rows = level_report(run, prm.dim);
    if (!out.empty()) {
      write_levels_csv(out / ("levels_" + to_string(mode) + ".csv"), rows);
      write_json(out / ("lambda_" + to_string(mode) + ".json"), to_json_value(run.lambda));
    }
    all.push_back(std::move(rows));
  }
  return all;
}

inline std::vector<std::vector<LevelRow>> run_levels(const ExperimentConfig& c, const std::filesystem::path& out) {
  const auto p = make_problem(c);
  switch (c.target) {
    case Target::control_midpoint: return run_levels(c, midpoint_control_integrand(p), out);
    case Target::control_field: return run_levels(c, control_field_integrand(p), out);
    case Target::pair: return run_levels(c, pair_integrand(p), out);
  }
  throw ValidationError("unknown target");
}

// ---------------------------------------------------------------------------
// single solve

/// Columns x, u, v, z over all mesh nodes.
inline void write_solution_csv(const std::filesystem::path& path, const OptimalityProblem& p,
                               const StateAdjointPair& w) {
  const auto u = with_boundary(w.u);
  const auto v = with_boundary(w.v);
  const auto z = with_boundary(p.control(w));
  CsvWriter csv(path, {"x", "u", "v", "z"});
  for (std::size_t i = 0; i < p.mesh().n; ++i) csv.row() << p.mesh().x(i) << u[i] << v[i] << z[i];
}

inline void write_quadcheck_csv(std::ostream& os, const HermiteBoundReport& report) {
  os << "nu,l,value\n";
  for (const auto& e : report.entries) {
    os << e.level << ',' << e.degree << ',' << format_double(e.value) << '\n';
  }
}

}  // namespace sparseoc
