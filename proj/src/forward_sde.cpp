#include "mfr/forward_sde.hpp"

#include <cmath>

#include "mfr/errors.hpp"
#include "mfr/parallel.hpp"
#include "mfr/rng.hpp"

namespace mfr {

void TimeGrid::validate() const {
    if (!(horizon > 0.0)) throw ValidationError("time grid horizon must be positive");
    if (steps < 1) throw ValidationError("time grid needs at least one step");
}

CoefficientSpec make_zero_coefficients(int state_dim, int noise_dim) {
    if (state_dim < 1 || noise_dim < 1)
        throw ValidationError("coefficient dimensions must be >= 1");
    CoefficientSpec c;
    c.state_dim = state_dim;
    c.noise_dim = noise_dim;
    c.drift = [state_dim](double, const Point&) { return Point::Zero(state_dim).eval(); };
    c.diffusion = [state_dim, noise_dim](double, const Point&) {
        return Matrix::Zero(state_dim, noise_dim).eval();
    };
    c.kind = "zero";
    return c;
}

CoefficientSpec make_constant_coefficients(const Point& b, const Matrix& sigma) {
    if (b.size() != sigma.rows())
        throw ValidationError("drift and diffusion state dimensions differ");
    CoefficientSpec c;
    c.state_dim = static_cast<int>(b.size());
    c.noise_dim = static_cast<int>(sigma.cols());
    c.drift = [b](double, const Point&) { return b; };
    c.diffusion = [sigma](double, const Point&) { return sigma; };
    c.kind = "constant";
    return c;
}

BrownianPanel::BrownianPanel(std::uint64_t seed, int particles, int steps, int noise_dim,
                             double dt, unsigned threads)
    : seed_(seed), particles_(particles), steps_(steps), noise_dim_(noise_dim), dt_(dt) {
    if (particles < 1 || steps < 1 || noise_dim < 1)
        throw ValidationError("Brownian panel dimensions must be >= 1");
    if (!(dt > 0.0)) throw ValidationError("Brownian panel dt must be positive");
    data_.resize(static_cast<std::size_t>(steps) * particles * noise_dim);
    double scale = std::sqrt(dt);
    parallel_for(static_cast<std::size_t>(particles), threads,
                 [&](std::size_t lo, std::size_t hi) {
                     for (std::size_t i = lo; i < hi; ++i) {
                         for (int k = 0; k < steps_; ++k) {
                             double* row = data_.data() +
                                           (static_cast<std::size_t>(k) * particles_ + i) * noise_dim_;
                             for (int c = 0; c < noise_dim_; c += 2) {
                                 auto z = normal_pair(seed_, kStreamBrownian,
                                                      static_cast<std::uint32_t>(i),
                                                      static_cast<std::uint32_t>(k),
                                                      static_cast<std::uint32_t>(c / 2));
                                 row[c] = scale * z[0];
                                 if (c + 1 < noise_dim_) row[c + 1] = scale * z[1];
                             }
                         }
                     }
                 });
}

Matrix ForwardPaths::slice_matrix(int k) const {
    Matrix m(particles, dim);
    for (int i = 0; i < particles; ++i) m.row(i) = at(k, i).transpose();
    return m;
}

EmpiricalMeasure ForwardPaths::law(int k) const {
    return empirical_from_flat(
        data.data() + static_cast<std::ptrdiff_t>(k) * particles * dim, particles, dim);
}

ForwardPaths simulate_forward(const CoefficientSpec& coeff, const std::vector<Point>& x0,
                              const TimeGrid& grid, const BrownianPanel& panel,
                              int panel_offset, double t_offset, unsigned threads) {
    grid.validate();
    if (!coeff.drift || !coeff.diffusion)
        throw ValidationError("coefficient spec needs drift and diffusion");
    const int N = static_cast<int>(x0.size());
    const int M = grid.steps;
    const int l = coeff.state_dim;
    if (N < 1) throw ValidationError("simulate_forward needs a nonempty initial cloud");
    if (N != panel.particles())
        throw ValidationError("initial cloud size does not match the Brownian panel");
    if (panel_offset < 0 || panel_offset + M > panel.steps())
        throw ValidationError("time grid does not fit inside the Brownian panel");
    if (std::abs(panel.dt() - grid.dt()) > 1e-12 * (1.0 + grid.dt()))
        throw ValidationError("Brownian panel dt does not match the time grid");
    if (coeff.noise_dim != panel.noise_dim())
        throw ValidationError("coefficient noise dimension does not match the Brownian panel");
    for (const auto& p : x0)
        if (p.size() != l) throw ValidationError("initial cloud dimension does not match the coefficients");

    ForwardPaths out;
    out.steps = M;
    out.particles = N;
    out.dim = l;
    out.data.resize(static_cast<std::size_t>(M + 1) * N * l);

    // dt and the clock both come from the panel so a suffix run sharing the
    // panel reproduces the original arrays bitwise
    const double dt = panel.dt();
    std::vector<int> bad(static_cast<std::size_t>(N), -1);
    parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Point x = x0[i];
            auto store = [&](int k, const Point& v) {
                double* dst = out.data.data() +
                              (static_cast<std::size_t>(k) * N + i) * static_cast<std::size_t>(l);
                Eigen::Map<Point>(dst, l) = v;
            };
            store(0, x);
            for (int k = 0; k < M; ++k) {
                double t = t_offset + dt * (panel_offset + k);
                Point nx = x + coeff.drift(t, x) * dt +
                           coeff.diffusion(t, x) * panel.increment(panel_offset + k, static_cast<int>(i));
                if (!all_finite(nx)) {
                    bad[i] = k;
                    nx = Point::Zero(l);
                }
                x = nx;
                store(k + 1, x);
                if (bad[i] >= 0) break;
            }
        }
    });
    for (int i = 0; i < N; ++i)
        if (bad[static_cast<std::size_t>(i)] >= 0)
            throw NumericalError("forward path became non-finite at step " +
                                 std::to_string(bad[static_cast<std::size_t>(i)]) +
                                 " for particle " + std::to_string(i));
    return out;
}

} // namespace mfr
