// sparseoc command line: solve, converge, samples, levels, quadcheck, mc.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <sparseoc/experiments.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace sparseoc;

struct Common {
  std::string config_path;
  std::string out;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
};

ExperimentConfig resolve(const Common& common) {
  ExperimentConfig c = preset(common.preset);
  if (!common.config_path.empty()) c = load_config(common.config_path, c);
  if (common.seed) {
    c.seed = *common.seed;
    c.mc.seed = *common.seed;
  }
  if (!common.out.empty()) c.output_dir = common.out;
  c.validate();
  return c;
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> y;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError("--y: cannot parse '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(v)) throw ValidationError("--y: cannot parse '" + item + "'");
    y.push_back(v);
  }
  return y;
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--out", common.out, "output directory");
  sub->add_option("--preset", common.preset, "base configuration")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--seed", common.seed, "seed for sampling and Monte Carlo");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Gauss-Hermite quadrature for optimal control under lognormal diffusion"};
  app.require_subcommand(1);
  Common common;

  auto* solve = app.add_subcommand("solve", "solve the optimality system at one parameter vector");
  std::string y_text;
  std::optional<std::size_t> sample;
  solve->add_option("--y", y_text, "comma separated parameters y_1,...; missing entries are 0");
  solve->add_option("--sample", sample, "use sample k of the seeded normal sequence");
  add_common(solve, common);

  auto* converge = app.add_subcommand("converge", "adaptive sparse quadrature in both modes plus MC");
  bool no_mc = false;
  converge->add_flag("--no-mc", no_mc, "skip the Monte Carlo comparison");
  add_common(converge, common);

  auto* samples = app.add_subcommand("samples", "state and control at seeded samples");
  std::optional<std::size_t> n_samples;
  samples->add_option("--n", n_samples, "number of samples (default from config)");
  add_common(samples, common);

  auto* levels = app.add_subcommand("levels", "per-dimension maximum levels of the adaptive index sets");
  add_common(levels, common);

  auto* quadcheck = app.add_subcommand("quadcheck", "Q_nu[H_l] table as CSV on stdout");
  unsigned nu_max = 20, l_max = 100;
  quadcheck->add_option("--nu-max", nu_max, "largest rule level")->check(CLI::Range(0u, 50u));
  quadcheck->add_option("--l-max", l_max, "largest Hermite degree")->check(CLI::Range(0u, 500u));
  add_common(quadcheck, common);

  auto* mc = app.add_subcommand("mc", "Monte Carlo convergence study");
  add_common(mc, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (quadcheck->parsed()) {
      write_quadcheck_csv(std::cout, hermite_bound_report(nu_max, l_max));
      return 0;
    }
    const ExperimentConfig c = resolve(common);
    const std::filesystem::path out = c.output_dir;
    if (solve->parsed()) {
      const auto p = make_problem(c);
      std::vector<double> y;
      if (!y_text.empty() && sample) throw ValidationError("use either --y or --sample");
      if (sample) {
        y = normal_sample(c.seed, *sample, p->sampler().dim());
      } else if (!y_text.empty()) {
        y = parse_vector(y_text);
        if (y.size() > p->sampler().dim()) throw ValidationError("--y has more entries than the field dimension");
      }
      std::filesystem::create_directories(out);
      write_solution_csv(out / "solve.csv", *p, p->solve(y));
    } else if (converge->parsed()) {
      const auto report = run_convergence(c, out, !no_mc);
      for (const auto& m : report.modes) {
        std::cout << to_string(m.mode) << ": slope_vs_indices " << format_double(m.slope_vs_indices)
                  << ", slope_vs_points " << format_double(m.slope_vs_points) << ", final error "
                  << format_double(m.final_error) << '\n';
      }
      if (!no_mc) std::cout << "mc slope " << format_double(report.mc.slope) << '\n';
    } else if (samples->parsed()) {
      const auto s = run_samples(c, n_samples.value_or(c.samples), c.seed, out);
      std::cout << "mean control relative L2 distance to z_d " << format_double(s.mean_control_distance) << '\n';
    } else if (levels->parsed()) {
      run_levels(c, out);
    } else if (mc->parsed()) {
      const auto study = run_mc(c, out);
      std::cout << "mc slope " << format_double(study.slope) << '\n';
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }
}
