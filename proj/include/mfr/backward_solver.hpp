#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfr/forward_sde.hpp"
#include "mfr/measure.hpp"
#include "mfr/obstacle.hpp"
#include "mfr/point.hpp"

namespace mfr {

// Driver f(t, x, y, z, law of X, law of (Y, vec Z)).
struct DriverSpec {
    std::function<Point(double, const Point&, const Point&, const Matrix&,
                        const EmpiricalMeasure&, const EmpiricalMeasure&)> f;
    // set false when f never reads the (Y, Z) law; skips building it
    bool uses_law_yz = true;
    std::string kind = "custom";
};

struct TerminalSpec {
    std::function<Point(const Point&, const EmpiricalMeasure&)> g;
    bool project_terminal = true;
    std::string kind = "custom";
};

struct SolverConfig {
    int particles = 200;
    TimeGrid grid{1.0, 100};
    double penalty = 100.0; // m
    int picard_iters = 8;
    double picard_tol = 1e-10;
    int basis_degree = 2;
    double ridge = 1e-8;
    std::uint64_t seed = 0;
    double feas_tol = 1e-9;
    double flow_dt = 0.0;    // terminal projection step, 0 = auto
    double flow_max_t = 0.0; // terminal projection budget, 0 = auto
    unsigned threads = 1;    // worker count; never changes results
    double t_offset = 0.0;   // shifts the coefficient and driver clocks

    void validate() const;
};

// Particle cloud solution on the grid. Flat arrays are indexed
// ((k * N) + i) * width; K and R are running integrals with K[0] = R[0] = 0.
struct ParticleSolution {
    int particles = 0, steps = 0;
    int y_dim = 0, x_dim = 0, noise_dim = 0;
    TimeGrid grid;
    SolverConfig config;

    std::vector<double> X;     // (M+1) x N x x_dim forward states
    std::vector<double> Y;     // (M+1) x N x y_dim
    std::vector<double> Z;     // (M+1) x N x (y_dim * noise_dim), col-major blocks
    std::vector<double> k_pen; // (M+1) x N penalty rates m h_minus(Y, law)
    std::vector<double> K;     // (M+1) x N cumulative penalty
    std::vector<double> R;     // (M+1) x N x y_dim cumulative reflection
    std::vector<std::string> warnings;

    Eigen::Map<const Point> x(int k, int i) const {
        return {X.data() + (static_cast<std::ptrdiff_t>(k) * particles + i) * x_dim, x_dim};
    }
    Eigen::Map<const Point> y(int k, int i) const {
        return {Y.data() + (static_cast<std::ptrdiff_t>(k) * particles + i) * y_dim, y_dim};
    }
    Eigen::Map<const Matrix> z(int k, int i) const {
        return {Z.data() + (static_cast<std::ptrdiff_t>(k) * particles + i) *
                               (static_cast<std::ptrdiff_t>(y_dim) * noise_dim),
                y_dim, noise_dim};
    }
    double k_pen_at(int k, int i) const {
        return k_pen[static_cast<std::size_t>(k) * particles + i];
    }
    double K_at(int k, int i) const {
        return K[static_cast<std::size_t>(k) * particles + i];
    }
    Eigen::Map<const Point> r(int k, int i) const {
        return {R.data() + (static_cast<std::ptrdiff_t>(k) * particles + i) * y_dim, y_dim};
    }
    EmpiricalMeasure x_law(int k) const;
    EmpiricalMeasure y_law(int k) const;
    std::vector<Point> y_cloud(int k) const;
};

// Penalized interacting-particle scheme: Euler forward pass, then backward
// least-squares induction with a per-step fixed-point loop that resolves the
// implicit penalty and reflection terms.
ParticleSolution solve_penalized(const CoefficientSpec& coeff, const DriverSpec& driver,
                                 const TerminalSpec& terminal, const ObstacleFunctional& H,
                                 const std::vector<Point>& x0, const SolverConfig& cfg);

struct DeterministicPath {
    TimeGrid grid;
    std::vector<Point> y;      // M+1 entries
    std::vector<double> k_pen; // M+1 entries
};

// Single-path reduction: deterministic terminal, driver free of x and z,
// law replaced by the Dirac mass of the current state. Serves as an exact
// oracle for the particle scheme when the diffusion vanishes.
DeterministicPath solve_deterministic_reduction(
    const std::function<Point(double, const Point&, const EmpiricalMeasure&)>& f,
    const ObstacleFunctional& H, const Point& terminal, const TimeGrid& grid,
    double penalty);

// Initial-cloud builders keyed per particle index, so the first N draws
// coincide for every population size (common random numbers across N).
std::function<std::vector<Point>(int, std::uint64_t)> make_constant_cloud(const Point& x);
std::function<std::vector<Point>(int, std::uint64_t)> make_gaussian_cloud(const Point& mean,
                                                                          double stddev);

// Full problem bundle used by studies and the command layer.
struct ProblemSpec {
    CoefficientSpec coeff;
    DriverSpec driver;
    TerminalSpec terminal;
    ObstacleFunctional obstacle;
    std::function<std::vector<Point>(int, std::uint64_t)> x0_sampler;
};

} // namespace mfr
