#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfr/measure.hpp"
#include "mfr/point.hpp"

namespace mfr {

struct TimeGrid {
    double horizon = 1.0;
    int steps = 100;

    double dt() const { return horizon / steps; }
    double time(int k) const { return horizon * k / steps; }
    void validate() const;
};

// dX = b(t, X) dt + sigma(t, X) dB, X in R^l, B in R^d
struct CoefficientSpec {
    std::function<Point(double, const Point&)> drift;      // -> R^l
    std::function<Matrix(double, const Point&)> diffusion; // -> l x d
    int state_dim = 1;
    int noise_dim = 1;
    std::string kind = "custom";
};

CoefficientSpec make_zero_coefficients(int state_dim, int noise_dim);
CoefficientSpec make_constant_coefficients(const Point& b, const Matrix& sigma);

// Pre-drawn Brownian increments over a uniform grid. Entry (k, i) holds the
// d-vector of increments of particle i over [t_k, t_{k+1}], addressed purely
// by (seed, i, k), so the panel is identical for any worker count and the
// draws of particle i do not depend on how many particles exist.
class BrownianPanel {
public:
    BrownianPanel(std::uint64_t seed, int particles, int steps, int noise_dim,
                  double dt, unsigned threads = 1);

    int particles() const { return particles_; }
    int steps() const { return steps_; }
    int noise_dim() const { return noise_dim_; }
    double dt() const { return dt_; }
    std::uint64_t seed() const { return seed_; }

    Eigen::Map<const Point> increment(int k, int i) const {
        return {data_.data() +
                    (static_cast<std::ptrdiff_t>(k) * particles_ + i) * noise_dim_,
                noise_dim_};
    }

private:
    std::uint64_t seed_;
    int particles_, steps_, noise_dim_;
    double dt_;
    std::vector<double> data_;
};

struct ForwardPaths {
    int steps = 0, particles = 0, dim = 0;
    std::vector<double> data; // ((k * N) + i) * dim, k = 0..steps

    Eigen::Map<const Point> at(int k, int i) const {
        return {data.data() + (static_cast<std::ptrdiff_t>(k) * particles + i) * dim, dim};
    }
    Matrix slice_matrix(int k) const;
    EmpiricalMeasure law(int k) const;
};

// Euler scheme started from the cloud x0. The step size and the coefficient
// clock t = t_offset + dt * (panel_offset + k) both come from the panel, so a
// run restarted from X_k with panel_offset = k and the same panel reproduces
// the original suffix arrays exactly. t_offset shifts the clock for problems
// genuinely starting at a later date (their own panel, offset 0).
ForwardPaths simulate_forward(const CoefficientSpec& coeff, const std::vector<Point>& x0,
                              const TimeGrid& grid, const BrownianPanel& panel,
                              int panel_offset = 0, double t_offset = 0.0,
                              unsigned threads = 1);

} // namespace mfr
