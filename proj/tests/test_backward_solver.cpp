#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfr/backward_solver.hpp"
#include "mfr/errors.hpp"

using namespace mfr;

namespace {

Point scalar_point(double v) {
  Point p(1);
  p[0] = v;
  return p;
}

DriverSpec constant_driver(double c) {
  DriverSpec d;
  d.f = [c](double, const Point&, const Point&, const Matrix&, const EmpiricalMeasure&,
            const EmpiricalMeasure&) { return scalar_point(c); };
  d.uses_law_yz = false;
  d.kind = "constant";
  return d;
}

TerminalSpec constant_terminal(double v, bool project = true) {
  TerminalSpec t;
  t.g = [v](const Point&, const EmpiricalMeasure&) { return scalar_point(v); };
  t.project_terminal = project;
  t.kind = "constant";
  return t;
}

} // namespace

TEST_CASE("classical obstacle against the single-path reduction") {
  // no noise, driver -1, H = y: the particle scheme must match the
  // deterministic recursion to regression accuracy (exactly, with degree 0)
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 8;
  cfg.grid = TimeGrid{1.0, 50};
  cfg.penalty = 40.0;
  cfg.picard_iters = 100;
  cfg.picard_tol = 1e-15;
  cfg.basis_degree = 0;
  cfg.ridge = 0.0;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), constant_driver(-1.0),
                             constant_terminal(0.0), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);

  auto path = solve_deterministic_reduction(
      [](double, const Point&, const EmpiricalMeasure&) { return scalar_point(-1.0); }, H,
      scalar_point(0.0), cfg.grid, cfg.penalty);

  for (int k = 0; k <= cfg.grid.steps; ++k)
    for (int i = 0; i < cfg.particles; ++i)
      CHECK(sol.y(k, i)[0] == doctest::Approx(path.y[size_t(k)][0]).epsilon(1e-8));
}

TEST_CASE("mean-coupled obstacle against the single-path reduction") {
  // all particles identical: the interacting system collapses to one path
  auto H = make_affine(scalar_point(1.0), 1.0, scalar_point(1.0), -5.0);
  SolverConfig cfg;
  cfg.particles = 4;
  // both reflection channels are active, so the fixed point contracts at
  // rate about 2 m dt; keep it well under one
  cfg.grid = TimeGrid{1.0, 300};
  cfg.penalty = 30.0;
  cfg.picard_iters = 200;
  cfg.picard_tol = 1e-15;
  cfg.basis_degree = 0;
  cfg.ridge = 0.0;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), constant_driver(-1.0),
                             constant_terminal(2.5), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);

  auto path = solve_deterministic_reduction(
      [](double, const Point&, const EmpiricalMeasure&) { return scalar_point(-1.0); }, H,
      scalar_point(2.5), cfg.grid, cfg.penalty);

  for (int k = 0; k <= cfg.grid.steps; ++k)
    CHECK(sol.y(k, 0)[0] == doctest::Approx(path.y[size_t(k)][0]).epsilon(1e-8));

  // the discrete equilibrium sits 1/(4m) below the constraint boundary
  CHECK(sol.y(0, 0)[0] == doctest::Approx(2.5 - 1.0 / (4.0 * cfg.penalty)).epsilon(1e-6));
}

TEST_CASE("penalty rates satisfy their defining identity") {
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 30;
  cfg.grid = TimeGrid{1.0, 40};
  cfg.penalty = 25.0;
  cfg.basis_degree = 1;

  Point b = Point::Zero(1);
  Matrix sigma = Matrix::Identity(1, 1) * 0.3;
  auto sol = solve_penalized(make_constant_coefficients(b, sigma), constant_driver(-1.0),
                             constant_terminal(0.0), H,
                             make_gaussian_cloud(scalar_point(0.0), 0.5)(cfg.particles, 1),
                             cfg);

  for (int k = 0; k <= cfg.grid.steps; ++k) {
    auto law = sol.y_law(k);
    for (int i = 0; i < cfg.particles; ++i) {
      double expect = cfg.penalty * h_minus(H, sol.y(k, i), law);
      CHECK(sol.k_pen_at(k, i) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("cumulative processes start at zero and are consistent") {
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 10;
  cfg.grid = TimeGrid{0.5, 20};
  cfg.penalty = 30.0;
  cfg.basis_degree = 0;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), constant_driver(-1.0),
                             constant_terminal(0.0), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);

  double dt = cfg.grid.dt();
  for (int i = 0; i < cfg.particles; ++i) {
    CHECK(sol.K_at(0, i) == 0.0);
    CHECK(sol.r(0, i)[0] == 0.0);
    double acc = 0.0;
    for (int k = 0; k < cfg.grid.steps; ++k) {
      acc += sol.k_pen_at(k, i) * dt;
      CHECK(sol.K_at(k + 1, i) == doctest::Approx(acc).epsilon(1e-12));
      // K is nondecreasing
      CHECK(sol.K_at(k + 1, i) >= sol.K_at(k, i));
    }
  }
}

TEST_CASE("solution is invariant in the thread count") {
  auto H = make_affine(scalar_point(1.0), 0.5, scalar_point(1.0), 0.2);
  Point b = Point::Constant(1, 0.1);
  Matrix sigma = Matrix::Identity(1, 1) * 0.4;
  SolverConfig cfg;
  cfg.particles = 60;
  cfg.grid = TimeGrid{1.0, 25};
  cfg.penalty = 50.0;
  cfg.basis_degree = 2;
  cfg.seed = 3;

  auto run = [&](unsigned threads) {
    SolverConfig c = cfg;
    c.threads = threads;
    return solve_penalized(make_constant_coefficients(b, sigma), constant_driver(-0.5),
                           constant_terminal(1.0), H,
                           make_gaussian_cloud(scalar_point(0.0), 1.0)(c.particles, c.seed),
                           c);
  };
  auto one = run(1);
  auto four = run(4);
  CHECK(one.Y == four.Y);
  CHECK(one.Z == four.Z);
  CHECK(one.K == four.K);
  CHECK(one.R == four.R);
}

TEST_CASE("repeat solve is bitwise identical") {
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.5);
  Point b = Point::Zero(1);
  Matrix sigma = Matrix::Identity(1, 1);
  SolverConfig cfg;
  cfg.particles = 40;
  cfg.grid = TimeGrid{1.0, 20};
  cfg.seed = 9;

  auto run = [&] {
    return solve_penalized(make_constant_coefficients(b, sigma), constant_driver(0.0),
                           constant_terminal(1.0), H,
                           make_gaussian_cloud(scalar_point(0.0), 1.0)(cfg.particles, cfg.seed),
                           cfg);
  };
  auto a = run();
  auto c = run();
  CHECK(a.Y == c.Y);
  CHECK(a.Z == c.Z);
}

TEST_CASE("mirror-coupled constraint keeps the constant solution") {
  // H(y, mu) = y - mean: Y identically equal to the terminal constant is a
  // solution with zero reflection; the scheme must not disturb it
  auto H = make_affine(scalar_point(1.0), 1.0, scalar_point(-1.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 100;
  cfg.grid = TimeGrid{1.0, 10};
  cfg.penalty = 100.0;
  cfg.basis_degree = 0;
  cfg.ridge = 0.0;
  cfg.seed = 2;

  DriverSpec zero;
  zero.f = [](double, const Point&, const Point&, const Matrix&, const EmpiricalMeasure&,
              const EmpiricalMeasure&) { return Point::Zero(1).eval(); };
  zero.uses_law_yz = false;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), zero, constant_terminal(1.0), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);

  // the cross-sectional mean of identical values is off by at most an ulp,
  // so the penalty rate is tiny but not exactly zero
  for (int k = 0; k <= cfg.grid.steps; ++k)
    for (int i = 0; i < cfg.particles; ++i) {
      CHECK(sol.y(k, i)[0] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(sol.k_pen_at(k, i) <= 1e-12);
    }
  CHECK(sol.K_at(cfg.grid.steps, 0) <= 1e-12);
}

TEST_CASE("driver reading the y law sees the particle mean") {
  // f = mean(Y): with terminal 1 and no obstacle pressure, the flat solution
  // satisfies dY/dt = -mean(Y) backwards, so Y_0 = e^{T}... the discrete
  // recursion compounds (1 + dt * mean) per step; check against that product
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 10.0);
  DriverSpec d;
  d.f = [](double, const Point&, const Point&, const Matrix&, const EmpiricalMeasure&,
           const EmpiricalMeasure& law_yz) {
    return scalar_point(law_yz.mean()[0]);
  };
  d.uses_law_yz = true;
  SolverConfig cfg;
  cfg.particles = 16;
  cfg.grid = TimeGrid{1.0, 64};
  cfg.penalty = 10.0;
  cfg.basis_degree = 0;
  cfg.ridge = 0.0;
  cfg.picard_iters = 200;
  cfg.picard_tol = 1e-15;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), d, constant_terminal(1.0), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);

  // fixed point per step: y = y_next + dt * y  =>  y = y_next / (1 - dt)
  double expect = 1.0;
  for (int k = 0; k < cfg.grid.steps; ++k) expect /= (1.0 - cfg.grid.dt());
  CHECK(sol.y(0, 0)[0] == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("terminal projection lifts an infeasible terminal") {
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 6;
  cfg.grid = TimeGrid{1.0, 10};
  cfg.penalty = 20.0;
  cfg.basis_degree = 0;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), constant_driver(0.0),
                             constant_terminal(-2.0, true), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);
  for (int i = 0; i < cfg.particles; ++i)
    CHECK(sol.y(cfg.grid.steps, i)[0] >= -cfg.feas_tol);
}

TEST_CASE("stiff penalty emits a warning") {
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 4;
  cfg.grid = TimeGrid{1.0, 100};
  cfg.penalty = 80.0; // penalty * dt = 0.8: contraction still converges
  cfg.basis_degree = 0;
  cfg.picard_iters = 200;

  auto sol = solve_penalized(make_zero_coefficients(1, 1), constant_driver(-1.0),
                             constant_terminal(0.0), H,
                             make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg);
  CHECK_FALSE(sol.warnings.empty());
}

TEST_CASE("a divergent fixed point raises a numerical error") {
  auto H = make_affine(scalar_point(1.0), 0.0, scalar_point(0.0), 0.0);
  SolverConfig cfg;
  cfg.particles = 4;
  cfg.grid = TimeGrid{1.0, 10};
  cfg.penalty = 1e4;
  cfg.basis_degree = 0;

  CHECK_THROWS_AS(
      solve_penalized(make_zero_coefficients(1, 1), constant_driver(-1.0),
                      constant_terminal(0.0), H,
                      make_constant_cloud(scalar_point(0.0))(cfg.particles, 1), cfg),
      NumericalError);
}

TEST_CASE("config validation rejects bad values") {
  SolverConfig cfg;
  cfg.particles = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SolverConfig{};
  cfg.penalty = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SolverConfig{};
  cfg.basis_degree = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SolverConfig{};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("gaussian cloud draws are common across population sizes") {
  auto small = make_gaussian_cloud(scalar_point(0.0), 1.0)(5, 42);
  auto large = make_gaussian_cloud(scalar_point(0.0), 1.0)(500, 42);
  for (int i = 0; i < 5; ++i) CHECK(small[size_t(i)][0] == large[size_t(i)][0]);
}
