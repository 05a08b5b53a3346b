#include "mfr/backward_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfr/errors.hpp"
#include "mfr/feasibility.hpp"
#include "mfr/parallel.hpp"
#include "mfr/regression.hpp"
#include "mfr/rng.hpp"

namespace mfr {

void SolverConfig::validate() const {
    grid.validate();
    if (particles < 1) throw ValidationError("solver needs at least one particle");
    if (!(penalty > 0.0)) throw ValidationError("penalty level must be positive");
    if (picard_iters < 1) throw ValidationError("picard_iters must be >= 1");
    if (!(picard_tol > 0.0)) throw ValidationError("picard_tol must be positive");
    if (basis_degree < 0) throw ValidationError("basis_degree must be nonnegative");
    if (ridge < 0.0) throw ValidationError("ridge must be nonnegative");
    if (!(feas_tol > 0.0)) throw ValidationError("feas_tol must be positive");
    if (flow_dt < 0.0 || flow_max_t < 0.0)
        throw ValidationError("terminal flow controls must be nonnegative");
    if (t_offset < 0.0) throw ValidationError("t_offset must be nonnegative");
}

EmpiricalMeasure ParticleSolution::x_law(int k) const {
    return empirical_from_flat(
        X.data() + static_cast<std::ptrdiff_t>(k) * particles * x_dim, particles, x_dim);
}

EmpiricalMeasure ParticleSolution::y_law(int k) const {
    return empirical_from_flat(
        Y.data() + static_cast<std::ptrdiff_t>(k) * particles * y_dim, particles, y_dim);
}

std::vector<Point> ParticleSolution::y_cloud(int k) const {
    std::vector<Point> cloud;
    cloud.reserve(static_cast<std::size_t>(particles));
    for (int i = 0; i < particles; ++i) cloud.emplace_back(y(k, i));
    return cloud;
}

ParticleSolution solve_penalized(const CoefficientSpec& coeff, const DriverSpec& driver,
                                 const TerminalSpec& terminal, const ObstacleFunctional& H,
                                 const std::vector<Point>& x0, const SolverConfig& cfg) {
    cfg.validate();
    validate_obstacle(H);
    if (!terminal.g) throw ValidationError("terminal spec needs g");
    if (x0.size() != static_cast<std::size_t>(cfg.particles))
        throw ValidationError("initial cloud size does not match cfg.particles");

    const int N = cfg.particles;
    const int M = cfg.grid.steps;
    const int n = H.dim;
    const int l = coeff.state_dim;
    const int d = coeff.noise_dim;
    const double dt = cfg.grid.dt();
    const double m = cfg.penalty;

    ParticleSolution sol;
    sol.particles = N;
    sol.steps = M;
    sol.y_dim = n;
    sol.x_dim = l;
    sol.noise_dim = d;
    sol.grid = cfg.grid;
    sol.config = cfg;

    if (m * dt * H.bound_M * H.bound_M >= 0.5)
        sol.warnings.push_back(
            "penalty * dt * bound_M^2 >= 0.5: the penalized drift is stiff; raise steps or "
            "lower the penalty level");

    BrownianPanel panel(cfg.seed, N, M, d, dt, cfg.threads);
    ForwardPaths paths = simulate_forward(coeff, x0, cfg.grid, panel, 0, cfg.t_offset,
                                          cfg.threads);
    sol.X = std::move(paths.data);

    sol.Y.assign(static_cast<std::size_t>(M + 1) * N * n, 0.0);
    sol.Z.assign(static_cast<std::size_t>(M + 1) * N * n * d, 0.0);
    sol.k_pen.assign(static_cast<std::size_t>(M + 1) * N, 0.0);
    sol.K.assign(static_cast<std::size_t>(M + 1) * N, 0.0);
    sol.R.assign(static_cast<std::size_t>(M + 1) * N * n, 0.0);

    auto y_slot = [&](int k, int i) {
        return Eigen::Map<Point>(
            sol.Y.data() + (static_cast<std::ptrdiff_t>(k) * N + i) * n, n);
    };

    // terminal values, projected onto the feasible set unless disabled
    {
        EmpiricalMeasure mu_x = sol.x_law(M);
        std::vector<Point> xi(static_cast<std::size_t>(N));
        parallel_for(static_cast<std::size_t>(N), cfg.threads,
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t i = lo; i < hi; ++i)
                             xi[i] = terminal.g(sol.x(M, static_cast<int>(i)), mu_x);
                     });
        for (const auto& p : xi) {
            if (p.size() != n)
                throw ValidationError("terminal g dimension does not match the obstacle");
            if (!all_finite(p)) throw NumericalError("terminal values are not finite");
        }
        if (terminal.project_terminal) {
            auto pr = project_terminal_particles(H, xi, cfg.flow_dt, cfg.flow_max_t,
                                                 cfg.feas_tol, 5, cfg.threads);
            xi = std::move(pr.points);
        }
        for (int i = 0; i < N; ++i) y_slot(M, i) = xi[static_cast<std::size_t>(i)];
        EmpiricalMeasure mu_y = sol.y_law(M);
        for (int i = 0; i < N; ++i)
            sol.k_pen[static_cast<std::size_t>(M) * N + i] =
                m * h_minus(H, sol.y(M, i), mu_y);
    }

    const bool have_f = static_cast<bool>(driver.f);
    std::vector<Point> ycur(static_cast<std::size_t>(N)), ynew(static_cast<std::size_t>(N));
    std::vector<double> krate(static_cast<std::size_t>(N));
    int stalled_steps = 0;
    double worst_resid = 0.0;

    for (int k = M - 1; k >= 0; --k) {
        const double t_k = cfg.t_offset + cfg.grid.time(k);
        Matrix xk(N, l);
        for (int i = 0; i < N; ++i) xk.row(i) = sol.x(k, i).transpose();
        PolyBasis basis(xk, cfg.basis_degree);
        Matrix design = basis.design(xk);

        // Z estimate: conditional expectation of Y_{k+1} dB^T / dt
        Matrix tz(N, n * d);
        for (int i = 0; i < N; ++i) {
            Matrix outer = sol.y(k + 1, i) * panel.increment(k, i).transpose() / dt;
            tz.row(i) = Eigen::Map<const Eigen::RowVectorXd>(outer.data(), n * d);
        }
        Matrix ynext(N, n);
        for (int i = 0; i < N; ++i) ynext.row(i) = sol.y(k + 1, i).transpose();

        RegressionResult zres = regress_conditional(design, tz, cfg.ridge);
        RegressionResult cres = regress_conditional(design, ynext, cfg.ridge);
        for (int i = 0; i < N; ++i)
            Eigen::Map<Eigen::RowVectorXd>(
                sol.Z.data() + (static_cast<std::ptrdiff_t>(k) * N + i) *
                                   (static_cast<std::ptrdiff_t>(n) * d),
                n * d) = zres.fitted.row(i);

        EmpiricalMeasure law_x = sol.x_law(k);

        // fixed-point loop for the implicit penalty and reflection terms,
        // started at the continuation value
        for (int i = 0; i < N; ++i) ycur[static_cast<std::size_t>(i)] = cres.fitted.row(i).transpose();
        double prev_delta = std::numeric_limits<double>::infinity();
        double last_delta = 0.0;
        for (int it = 0; it < cfg.picard_iters; ++it) {
            EmpiricalMeasure mu_y(ycur);
            parallel_for(static_cast<std::size_t>(N), cfg.threads,
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t i = lo; i < hi; ++i)
                                 krate[i] = m * h_minus(H, ycur[i], mu_y);
                         });
            std::vector<Point> refl = reflection_increment(H, ycur, mu_y, krate, cfg.threads);
            EmpiricalMeasure law_yz = [&] {
                if (!(have_f && driver.uses_law_yz))
                    return EmpiricalMeasure({Point::Zero(1)});
                std::vector<Point> atoms(static_cast<std::size_t>(N));
                for (int i = 0; i < N; ++i) {
                    Point a(n + n * d);
                    a.head(n) = ycur[static_cast<std::size_t>(i)];
                    a.tail(n * d) = Eigen::Map<const Point>(
                        sol.Z.data() + (static_cast<std::ptrdiff_t>(k) * N + i) *
                                           (static_cast<std::ptrdiff_t>(n) * d),
                        n * d);
                    atoms[static_cast<std::size_t>(i)] = std::move(a);
                }
                return EmpiricalMeasure(std::move(atoms));
            }();
            parallel_for(static_cast<std::size_t>(N), cfg.threads,
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t i = lo; i < hi; ++i) {
                                 Point v = cres.fitted.row(static_cast<int>(i)).transpose();
                                 if (have_f)
                                     v += dt * driver.f(t_k, sol.x(k, static_cast<int>(i)),
                                                        ycur[i], sol.z(k, static_cast<int>(i)),
                                                        law_x, law_yz);
                                 v += dt * refl[i];
                                 ynew[i] = std::move(v);
                             }
                         });
            double delta = 0.0;
            for (int i = 0; i < N; ++i)
                delta = std::max(delta,
                                 (ynew[static_cast<std::size_t>(i)] -
                                  ycur[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff());
            std::swap(ycur, ynew);
            last_delta = delta;
            if (delta <= cfg.picard_tol) break;
            if (it >= 1 && delta > prev_delta * (1.0 + 1e-12) && delta > 10.0 * cfg.picard_tol)
                throw NumericalError(
                    "fixed-point loop diverged at step " + std::to_string(k) +
                    "; the penalized drift is too stiff: raise steps or lower the penalty");
            prev_delta = delta;
        }
        if (last_delta > cfg.picard_tol) {
            ++stalled_steps;
            worst_resid = std::max(worst_resid, last_delta);
        }
        for (int i = 0; i < N; ++i) {
            if (!all_finite(ycur[static_cast<std::size_t>(i)]))
                throw NumericalError("non-finite backward state at step " + std::to_string(k) +
                                     "; raise steps or lower the penalty");
            y_slot(k, i) = ycur[static_cast<std::size_t>(i)];
        }
        // restore the defining identity k_pen = m h_minus(Y, law) on the
        // final iterate
        EmpiricalMeasure mu_y = sol.y_law(k);
        parallel_for(static_cast<std::size_t>(N), cfg.threads,
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t i = lo; i < hi; ++i)
                             sol.k_pen[static_cast<std::size_t>(k) * N + i] =
                                 m * h_minus(H, sol.y(k, static_cast<int>(i)), mu_y);
                     });
    }

    if (stalled_steps > 0)
        sol.warnings.push_back("fixed-point loop stopped above tolerance at " +
                               std::to_string(stalled_steps) + " of " + std::to_string(M) +
                               " steps (worst residual " + std::to_string(worst_resid) +
                               "); raise picard_iters or steps");

    // running integrals of the penalty and of the reflection term
    for (int k = 0; k < M; ++k) {
        std::vector<Point> cloud = sol.y_cloud(k);
        std::vector<double> rates(sol.k_pen.begin() + static_cast<std::ptrdiff_t>(k) * N,
                                  sol.k_pen.begin() + static_cast<std::ptrdiff_t>(k + 1) * N);
        std::vector<Point> refl =
            reflection_increment(H, cloud, sol.y_law(k), rates, cfg.threads);
        for (int i = 0; i < N; ++i) {
            sol.K[static_cast<std::size_t>(k + 1) * N + i] =
                sol.K[static_cast<std::size_t>(k) * N + i] + dt * rates[static_cast<std::size_t>(i)];
            Eigen::Map<Point>(sol.R.data() + (static_cast<std::ptrdiff_t>(k + 1) * N + i) * n, n) =
                sol.r(k, i) + dt * refl[static_cast<std::size_t>(i)];
        }
    }
    return sol;
}

DeterministicPath solve_deterministic_reduction(
    const std::function<Point(double, const Point&, const EmpiricalMeasure&)>& f,
    const ObstacleFunctional& H, const Point& terminal, const TimeGrid& grid,
    double penalty) {
    grid.validate();
    validate_obstacle(H);
    if (terminal.size() != H.dim)
        throw ValidationError("terminal point dimension does not match the obstacle");
    if (!(penalty > 0.0)) throw ValidationError("penalty level must be positive");

    const int M = grid.steps;
    const double dt = grid.dt();
    DeterministicPath path;
    path.grid = grid;
    path.y.assign(static_cast<std::size_t>(M) + 1, Point::Zero(H.dim));
    path.k_pen.assign(static_cast<std::size_t>(M) + 1, 0.0);

    path.y[static_cast<std::size_t>(M)] = terminal;
    {
        EmpiricalMeasure mu({terminal});
        path.k_pen[static_cast<std::size_t>(M)] = penalty * h_minus(H, terminal, mu);
    }
    for (int k = M - 1; k >= 0; --k) {
        const double t_k = grid.time(k);
        const Point& next = path.y[static_cast<std::size_t>(k) + 1];
        Point y = next;
        for (int it = 0; it < 200; ++it) {
            EmpiricalMeasure mu({y});
            std::vector<double> kp = {penalty * h_minus(H, y, mu)};
            std::vector<Point> refl = reflection_increment(H, {y}, mu, kp);
            Point yn = next + dt * refl[0];
            if (f) yn += dt * f(t_k, y, mu);
            double delta = (yn - y).cwiseAbs().maxCoeff();
            y = yn;
            if (delta <= 1e-14) break;
        }
        path.y[static_cast<std::size_t>(k)] = y;
        EmpiricalMeasure mu({y});
        path.k_pen[static_cast<std::size_t>(k)] = penalty * h_minus(H, y, mu);
    }
    return path;
}

std::function<std::vector<Point>(int, std::uint64_t)> make_constant_cloud(const Point& x) {
    return [x](int count, std::uint64_t) {
        return std::vector<Point>(static_cast<std::size_t>(count), x);
    };
}

std::function<std::vector<Point>(int, std::uint64_t)> make_gaussian_cloud(const Point& mean,
                                                                          double stddev) {
    if (!(stddev >= 0.0)) throw ValidationError("gaussian cloud needs stddev >= 0");
    return [mean, stddev](int count, std::uint64_t seed) {
        std::vector<Point> cloud(static_cast<std::size_t>(count));
        const int dim = static_cast<int>(mean.size());
        for (int i = 0; i < count; ++i) {
            Point p(dim);
            for (int c = 0; c < dim; c += 2) {
                auto z = normal_pair(seed, kStreamInitialCloud, static_cast<std::uint32_t>(i),
                                     0, static_cast<std::uint32_t>(c / 2));
                p[c] = mean[c] + stddev * z[0];
                if (c + 1 < dim) p[c + 1] = mean[c + 1] + stddev * z[1];
            }
            cloud[static_cast<std::size_t>(i)] = std::move(p);
        }
        return cloud;
    };
}

} // namespace mfr
