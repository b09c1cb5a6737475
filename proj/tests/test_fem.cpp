#include <sparseoc/fem.hpp>
#include <sparseoc/montecarlo.hpp>

#include <Eigen/Dense>
#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace sparseoc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

Eigen::MatrixXd dense(const SymTridiagonal& t) {
  const auto m = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    d(i, i) = t.diag[i];
    if (i + 1 < m) d(i, i + 1) = d(i + 1, i) = t.off[i];
  }
  return d;
}

Eigen::VectorXd vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

// Block (non-interleaved) KKT matrix and right-hand side, solved densely.
std::pair<Eigen::VectorXd, Eigen::VectorXd> dense_kkt(const SymTridiagonal& a, const SymTridiagonal& mass,
                                                      const std::vector<double>& f, const std::vector<double>& ud,
                                                      double beta) {
  const auto m = static_cast<Eigen::Index>(a.size());
  const Eigen::MatrixXd A = dense(a), M = dense(mass);
  Eigen::MatrixXd T(2 * m, 2 * m);
  T << beta * A, M, -M, A;
  Eigen::VectorXd rhs(2 * m);
  rhs << beta * M * vec(f), -M * vec(ud);
  const Eigen::VectorXd x = T.fullPivLu().solve(rhs);
  return {x.head(m), x.tail(m)};
}

// Exact L2 error of the piecewise-linear u_h against sin(pi x), 5-point Gauss per element.
double l2_error_vs_sine(const Mesh& mesh, const std::vector<double>& u) {
  static const double gx[] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
  static const double gw[] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                              0.2369268850561891};
  const double h = mesh.h();
  double s = 0.0;
  for (std::size_t e = 0; e < mesh.elements(); ++e) {
    const double ul = e == 0 ? 0.0 : u[e - 1];
    const double ur = e + 1 == mesh.elements() ? 0.0 : u[e];
    for (int q = 0; q < 5; ++q) {
      const double t = 0.5 * (gx[q] + 1.0);
      const double x = mesh.x(e) + t * h;
      const double d = ul + t * (ur - ul) - std::sin(pi * x);
      s += 0.5 * h * gw[q] * d * d;
    }
  }
  return std::sqrt(s);
}

FieldParams constant_field(double) {
  FieldParams s;
  s.dim = 1;
  s.modes = [](std::size_t, double) { return 1.0; };
  return s;
}

}  // namespace

TEST_CASE("stiffness and mass matrices", "[pde]") {
  const Mesh mesh(9);
  FieldParams prm;
  prm.dim = 5;
  const auto a0 = assemble_stiffness(mesh, prm, std::vector<double>(5, 0.0));
  const double h = mesh.h();
  for (std::size_t i = 0; i < a0.size(); ++i) {
    REQUIRE_THAT(a0.diag[i], WithinRel(2.0 / h, 1e-15));
    if (i + 1 < a0.size()) REQUIRE_THAT(a0.off[i], WithinRel(-1.0 / h, 1e-15));
  }

  const double c = 0.7;
  const auto ac = assemble_stiffness(mesh, constant_field(c), std::vector<double>{c});
  for (std::size_t i = 0; i < ac.size(); ++i) {
    REQUIRE_THAT(ac.diag[i], WithinRel(std::exp(c) * 2.0 / h, 1e-14));
    if (i + 1 < ac.size()) REQUIRE_THAT(ac.off[i], WithinRel(-std::exp(c) / h, 1e-14));
  }

  // symmetric storage; the dense view is symmetric by construction and positive definite
  std::vector<double> y{0.3, -1.2, 0.8, 2.0, -0.4};
  const Eigen::MatrixXd A = dense(assemble_stiffness(mesh, prm, y));
  REQUIRE(A == A.transpose());
  REQUIRE(Eigen::LLT<Eigen::MatrixXd>(A).info() == Eigen::Success);

  const Mesh m5(5);
  const auto mass = assemble_mass(m5);
  REQUIRE_THAT(mass.diag[0], WithinAbs(4.0 * 0.25 / 6.0, 1e-16));
  REQUIRE_THAT(mass.diag[0], WithinAbs(0.16667, 1e-5));
  const Eigen::MatrixXd M = dense(assemble_mass(mesh));
  REQUIRE(Eigen::LLT<Eigen::MatrixXd>(M).info() == Eigen::Success);
  // interior rows away from the boundary sum to h
  for (Eigen::Index i = 1; i + 1 < M.rows(); ++i) REQUIRE_THAT(M.row(i).sum(), WithinRel(h, 1e-14));
}

TEST_CASE("overflow guard on the coefficient", "[pde]") {
  const Mesh mesh(5);
  REQUIRE_THROWS_AS(assemble_stiffness(mesh, constant_field(0), std::vector<double>{701.0}), NumericalError);
  REQUIRE_NOTHROW(assemble_stiffness(mesh, constant_field(0), std::vector<double>{699.0}));
}

TEST_CASE("state solve: manufactured solution, linearity, zero data", "[pde]") {
  FieldParams prm;
  prm.dim = 3;
  const std::vector<double> y0(3, 0.0);
  for (std::size_t n : {17u, 65u, 257u}) {
    const Mesh mesh(n);
    const auto f = interpolate_interior(mesh, [](double x) { return pi * pi * std::sin(pi * x); });
    const std::vector<double> zero(mesh.interior(), 0.0);
    const auto u = solve_state(mesh, prm, y0, f, zero);
    double max_err = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) max_err = std::max(max_err, std::abs(u[i] - std::sin(pi * mesh.x(i + 1))));
    const double h = mesh.h();
    REQUIRE(max_err < 2.0 * h * h);

    for (double v : solve_state(mesh, prm, y0, zero, zero)) REQUIRE(v == 0.0);
  }

  const Mesh mesh(33);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g;
  std::vector<double> f1(mesh.interior()), f2(mesh.interior()), f12(mesh.interior()), z(mesh.interior(), 0.0);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    f1[i] = g(gen);
    f2[i] = g(gen);
    f12[i] = f1[i] + f2[i];
  }
  const std::vector<double> y{0.5, -1.0, 1.5};
  const auto u1 = solve_state(mesh, prm, y, f1, z);
  const auto u2 = solve_state(mesh, prm, y, f2, z);
  const auto u12 = solve_state(mesh, prm, y, f12, z);
  for (std::size_t i = 0; i < u1.size(); ++i) REQUIRE_THAT(u12[i], WithinAbs(u1[i] + u2[i], 1e-12));
}

TEST_CASE("FEM L2 convergence order is 2", "[pde]") {
  FieldParams prm;
  prm.dim = 1;
  std::vector<double> hs, errs;
  for (std::size_t n : {17u, 33u, 65u, 129u, 257u}) {
    const Mesh mesh(n);
    const auto f = interpolate_interior(mesh, [](double x) { return pi * pi * std::sin(pi * x); });
    const auto u = solve_state(mesh, prm, std::vector<double>{0.0}, f, std::vector<double>(mesh.interior(), 0.0));
    hs.push_back(mesh.h());
    errs.push_back(l2_error_vs_sine(mesh, u));
  }
  const double slope = loglog_slope(hs, errs);
  INFO("slope " << slope);
  REQUIRE(std::abs(slope - 2.0) <= 0.1);
}

TEST_CASE("banded LU matches a dense LU", "[pde]") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {1u, 2u, 5u, 12u, 40u}) {
    BandedLU band(n, 3, 3);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = (i >= 3 ? i - 3 : 0); j <= std::min(n - 1, i + 3); ++j) {
        const double v = u(gen) + (i == j ? 0.1 : 0.0);
        band.at(i, j) = v;
        D(i, j) = v;
      }
    }
    std::vector<double> b(n);
    for (auto& v : b) v = u(gen);
    band.factorize();
    const auto x = band.solve(b);
    const Eigen::VectorXd xd = D.fullPivLu().solve(vec(b));
    for (std::size_t i = 0; i < n; ++i) REQUIRE_THAT(x[i], WithinAbs(xd[i], 1e-9 * (1.0 + xd.norm())));
  }
  BandedLU singular(3, 3, 3);
  REQUIRE_THROWS_AS(singular.factorize(), NumericalError);
  BandedLU unfactored(3, 1, 1);
  REQUIRE_THROWS_AS(unfactored.solve({1, 2, 3}), ValidationError);
}

TEST_CASE("optimality system against the dense KKT oracle", "[pde]") {
  const Mesh mesh(65);
  FieldParams prm;
  prm.dim = 65;
  const auto f = interpolate_interior(mesh, [](double x) { return x * (1.0 - x); });
  const auto ud = interpolate_interior(mesh, [](double x) { return std::sin(pi * x) + 0.1 * std::sin(3 * pi * x); });
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto y = normal_sample(42, k, prm.dim);
    for (double beta : {1.0, 1e-2, 1e-4}) {
      const auto w = solve_optimality(mesh, prm, y, f, ud, beta);
      const auto a = assemble_stiffness(mesh, prm, y);
      const auto [u_ref, v_ref] = dense_kkt(a, assemble_mass(mesh), f, ud, beta);
      REQUIRE((vec(w.u) - u_ref).norm() <= 1e-10 * u_ref.norm());
      REQUIRE((vec(w.v) - v_ref).norm() <= 1e-10 * v_ref.norm());
    }
  }
}

TEST_CASE("optimality residual and the attainable-data fixed point", "[pde]") {
  const Mesh mesh(129);
  FieldParams prm;
  prm.dim = 20;
  const auto y = normal_sample(9, 0, prm.dim);
  const auto f = interpolate_interior(mesh, [](double x) { return 1.0 + x; });
  const std::vector<double> zero(mesh.interior(), 0.0);
  const auto ud = solve_state(mesh, prm, y, f, zero);
  const double beta = 1e-4;
  const auto w = solve_optimality(mesh, prm, y, f, ud, beta);
  const double nd = l2_norm(mesh, ud);
  REQUIRE(l2_norm(mesh, w.v) <= 1e-10 * nd);
  REQUIRE(l2_norm(mesh, ResultOps<std::vector<double>>::subtract(w.u, ud)) <= 1e-10 * nd);

  // residual of both block equations for a generic instance
  const auto ud2 = interpolate_interior(mesh, [](double x) { return std::sin(pi * x); });
  const auto w2 = solve_optimality(mesh, prm, y, f, ud2, beta);
  const auto a = assemble_stiffness(mesh, prm, y);
  const auto mass = assemble_mass(mesh);
  const auto rhs = optimality_rhs(mass, f, ud2, beta);
  const auto au = a.multiply(w2.u), av = a.multiply(w2.v), mu = mass.multiply(w2.u), mv = mass.multiply(w2.v);
  double res = 0.0, rn = 0.0;
  for (std::size_t i = 0; i < au.size(); ++i) {
    const double r1 = beta * au[i] + mv[i] - rhs[2 * i];
    const double r2 = -mu[i] + av[i] - rhs[2 * i + 1];
    res += r1 * r1 + r2 * r2;
    rn += rhs[2 * i] * rhs[2 * i] + rhs[2 * i + 1] * rhs[2 * i + 1];
  }
  REQUIRE(std::sqrt(res) <= 1e-10 * std::sqrt(rn));
}

TEST_CASE("control recovery at kappa = 0", "[pde]") {
  const Mesh mesh(257);
  FieldParams prm;
  prm.dim = 1;
  const std::vector<double> y0{0.0};
  const auto zd = interpolate_interior(mesh, [](double x) { return std::sin(pi * x); });
  const std::vector<double> f(mesh.interior(), 0.0);
  const auto ud = solve_state(mesh, prm, y0, f, zd);
  const auto w = solve_optimality(mesh, prm, y0, f, ud, 1e-4);
  const auto z = control_from_adjoint(w.v, 1e-4);
  const double rel = l2_norm(mesh, ResultOps<std::vector<double>>::subtract(z, zd)) / l2_norm(mesh, zd);
  INFO("relative control error " << rel);
  REQUIRE(rel <= 0.05);

  const auto [u_ref, v_ref] = dense_kkt(assemble_stiffness(mesh, prm, y0), assemble_mass(mesh), f, ud, 1e-4);
  const Eigen::VectorXd z_ref = -v_ref / 1e-4;
  REQUIRE((vec(z) - z_ref).norm() <= 1e-9 * z_ref.norm());
}

TEST_CASE("skew structure of the block operator", "[pde][property]") {
  const Mesh mesh(17);
  FieldParams prm;
  prm.dim = 8;
  std::mt19937_64 gen(5);
  std::normal_distribution<double> g;
  const double beta = 0.3;
  const auto y = normal_sample(1, 2, prm.dim);
  const auto a = assemble_stiffness(mesh, prm, y);
  const auto sys = assemble_optimality_operator(a, assemble_mass(mesh), beta);
  const std::size_t m = a.size();
  for (int t = 0; t < 20; ++t) {
    std::vector<double> p(2 * m);
    for (auto& v : p) v = g(gen);
    double ptp = 0.0;
    for (std::size_t i = 0; i < 2 * m; ++i) {
      for (std::size_t j = (i >= 3 ? i - 3 : 0); j <= std::min(2 * m - 1, i + 3); ++j) ptp += p[i] * sys.at(i, j) * p[j];
    }
    std::vector<double> u(m), v(m);
    for (std::size_t i = 0; i < m; ++i) {
      u[i] = p[2 * i];
      v[i] = p[2 * i + 1];
    }
    const double expect = beta * a.quadratic_form(u) + a.quadratic_form(v);
    REQUIRE_THAT(ptp, WithinAbs(expect, 1e-12 * std::abs(expect)));
  }
}

TEST_CASE("control norm is monotone in beta", "[pde][property]") {
  const Mesh mesh(65);
  FieldParams prm;
  prm.dim = 10;
  const auto y = normal_sample(3, 1, prm.dim);
  const auto ud = interpolate_interior(mesh, [](double x) { return x * (1 - x); });
  const std::vector<double> f(mesh.interior(), 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {1e-4, 1e-3, 1e-2}) {
    const auto w = solve_optimality(mesh, prm, y, f, ud, beta);
    const double zn = l2_norm(mesh, control_from_adjoint(w.v, beta));
    REQUIRE(zn <= prev);
    prev = zn;
  }
}

TEST_CASE("solves are bitwise deterministic", "[pde]") {
  const Mesh mesh(129);
  FieldParams prm;
  prm.dim = 129;
  const auto y = normal_sample(77, 3, prm.dim);
  const auto ud = interpolate_interior(mesh, [](double x) { return std::sin(pi * x); });
  const std::vector<double> f(mesh.interior(), 0.0);
  const OptimalityProblem p(mesh, prm, f, ud, 1e-4);
  const auto w1 = p.solve(y);
  const auto w2 = p.solve(y);
  const auto w3 = solve_optimality(mesh, prm, y, f, ud, 1e-4);
  REQUIRE(w1 == w2);
  REQUIRE(w1 == w3);
}

TEST_CASE("W norm", "[pde]") {
  const Mesh m3(3);
  StateAdjointPair hat{{1.0}, {0.0}};
  REQUIRE_THAT(w_norm(m3, hat, 1.0), WithinAbs(2.0, 1e-15));
  StateAdjointPair zero{{0.0}, {0.0}};
  REQUIRE(w_norm(m3, zero, 1.0) == 0.0);

  const Mesh mesh(33);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> g;
  StateAdjointPair w{std::vector<double>(mesh.interior()), std::vector<double>(mesh.interior())};
  for (auto& v : w.u) v = g(gen);
  for (auto& v : w.v) v = g(gen);
  const double base = w_norm(mesh, w, 0.1);
  REQUIRE(base > 0.0);
  for (double c : {-3.0, 0.5, 2.0}) {
    StateAdjointPair cw = w;
    for (auto& v : cw.u) v *= c;
    for (auto& v : cw.v) v *= c;
    REQUIRE_THAT(w_norm(mesh, cw, 0.1), WithinRel(std::abs(c) * base, 1e-14));
  }
}

TEST_CASE("a-priori bound diagnostic", "[pde]") {
  const Mesh mesh(129);
  FieldParams prm;
  prm.dim = 16;
  const FieldSampler sampler(mesh, prm);
  const std::vector<double> zero(mesh.interior(), 0.0);

  const auto y = normal_sample(2, 0, prm.dim);
  const auto w0 = solve_optimality(mesh, prm, y, zero, zero, 1e-2);
  const auto b0 = apriori_bound_check(w0, sampler, y, zero, zero, 1e-2);
  REQUIRE(b0.w_norm == 0.0);
  REQUIRE(b0.bound == 0.0);
  REQUIRE(b0.holds);

  const std::vector<double> y0(prm.dim, 0.0);
  const auto f = interpolate_interior(mesh, [](double x) { return pi * pi * std::sin(pi * x); });
  const auto w = solve_optimality(mesh, prm, y0, f, zero, 1.0);
  const auto b = apriori_bound_check(w, sampler, y0, f, zero, 1.0);
  REQUIRE_THAT(b.bound, WithinRel(pi / std::sqrt(2.0), 1e-3));
  REQUIRE(b.holds);

  const auto ud = interpolate_interior(mesh, [](double x) { return std::sin(pi * x); });
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto yk = normal_sample(13, k, prm.dim);
    for (double beta : {1.0, 1e-2, 1e-4}) {
      const auto wk = solve_optimality(mesh, prm, yk, f, ud, beta);
      REQUIRE(apriori_bound_check(wk, sampler, yk, f, ud, beta).holds);
    }
  }
}
