#include "mfr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfr/errors.hpp"
#include "mfr/parallel.hpp"

namespace mfr {

DiagnosticsReport constraint_metrics(const ParticleSolution& sol,
                                     const ObstacleFunctional& H, unsigned threads) {
    const int N = sol.particles;
    const int M = sol.steps;
    const int n = sol.y_dim;
    const double dt = sol.grid.dt();

    DiagnosticsReport rep;
    rep.t.resize(static_cast<std::size_t>(M) + 1);
    rep.mean_h_minus_sq.resize(static_cast<std::size_t>(M) + 1);
    rep.sup_h_minus.resize(static_cast<std::size_t>(M) + 1);
    rep.defect_partial.resize(static_cast<std::size_t>(M) + 1);
    rep.mean_k.resize(static_cast<std::size_t>(M) + 1);
    rep.mean_y.resize(M + 1, n);
    rep.std_y.resize(M + 1, n);

    std::vector<double> hvals(static_cast<std::size_t>(N));
    double defect_acc = 0.0;
    for (int k = 0; k <= M; ++k) {
        EmpiricalMeasure mu = sol.y_law(k);
        parallel_for(static_cast<std::size_t>(N), threads,
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t i = lo; i < hi; ++i)
                             hvals[i] = H.eval(sol.y(k, static_cast<int>(i)), mu);
                     });
        double hm2 = 0.0, sup_hm = 0.0, hk = 0.0, y2 = 0.0, y4 = 0.0, z2 = 0.0, km = 0.0;
        for (int i = 0; i < N; ++i) {
            double hm = std::max(0.0, -hvals[static_cast<std::size_t>(i)]);
            hm2 += hm * hm;
            sup_hm = std::max(sup_hm, hm);
            hk += hvals[static_cast<std::size_t>(i)] * sol.k_pen_at(k, i);
            double sq = sol.y(k, i).squaredNorm();
            y2 += sq;
            y4 += sq * sq;
            z2 += sol.z(k, i).squaredNorm();
            km += sol.K_at(k, i);
        }
        hm2 /= N;
        hk /= N;
        rep.mean_h_minus_sq[static_cast<std::size_t>(k)] = hm2;
        rep.sup_h_minus[static_cast<std::size_t>(k)] = sup_hm;
        rep.mean_k[static_cast<std::size_t>(k)] = km / N;
        rep.t[static_cast<std::size_t>(k)] = sol.grid.time(k);
        rep.defect_partial[static_cast<std::size_t>(k)] = defect_acc;
        rep.sup_h_minus_sq = std::max(rep.sup_h_minus_sq, hm2);
        rep.sup_mean_y2 = std::max(rep.sup_mean_y2, y2 / N);
        rep.sup_mean_y4 = std::max(rep.sup_mean_y4, y4 / N);
        if (k < M) {
            rep.int_h_minus_sq += hm2 * dt;
            defect_acc += hk * dt;
            rep.int_mean_z2 += z2 / N * dt;
        }
        Point my = mu.mean();
        rep.mean_y.row(k) = my.transpose();
        for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            for (int i = 0; i < N; ++i) {
                double dv = sol.y(k, i)[c] - my[c];
                acc += dv * dv;
            }
            rep.std_y(k, c) = std::sqrt(acc / N);
        }
    }
    rep.defect_partial[static_cast<std::size_t>(M)] = defect_acc;
    rep.skorokhod_signed = defect_acc;
    rep.skorokhod_defect = std::abs(defect_acc);
    for (int i = 0; i < N; ++i) {
        double kt = sol.K_at(M, i);
        rep.k_terminal_mean += kt;
        rep.k_terminal_sq_mean += kt * kt;
    }
    rep.k_terminal_mean /= N;
    rep.k_terminal_sq_mean /= N;
    return rep;
}

double StudyTable::at(std::size_t row, const std::string& column) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (columns[c] == column) return rows[row][c];
    throw ValidationError("study table has no column " + column);
}

StudyTable penalty_rate_study(const ProblemSpec& prob, const SolverConfig& cfg,
                              const std::vector<double>& m_grid) {
    if (m_grid.size() < 2)
        throw ValidationError("penalty study needs at least two penalty levels");
    for (std::size_t j = 0; j < m_grid.size(); ++j) {
        if (!(m_grid[j] > 0.0)) throw ValidationError("penalty levels must be positive");
        if (j > 0 && m_grid[j] <= m_grid[j - 1])
            throw ValidationError("penalty levels must be strictly increasing");
    }
    if (!prob.x0_sampler) throw ValidationError("problem spec needs an x0 sampler");

    std::vector<Point> x0 = prob.x0_sampler(cfg.particles, cfg.seed);
    StudyTable table;
    table.knob = "penalty";
    table.columns = {"sup_h_minus_sq", "int_h_minus_sq", "m_sup_h_minus_sq",
                     "m2_int_h_minus_sq", "k_terminal_mean", "k_terminal_sq_mean",
                     "ratio_m_sup", "ratio_m2_int"};
    for (double m : m_grid) {
        SolverConfig run_cfg = cfg;
        run_cfg.penalty = m;
        ParticleSolution sol =
            solve_penalized(prob.coeff, prob.driver, prob.terminal, prob.obstacle, x0, run_cfg);
        DiagnosticsReport rep = constraint_metrics(sol, prob.obstacle, cfg.threads);
        table.knob_values.push_back(m);
        std::vector<double> row = {rep.sup_h_minus_sq,
                                   rep.int_h_minus_sq,
                                   m * rep.sup_h_minus_sq,
                                   m * m * rep.int_h_minus_sq,
                                   rep.k_terminal_mean,
                                   rep.k_terminal_sq_mean,
                                   1.0,
                                   1.0};
        if (!table.rows.empty()) {
            const auto& prev = table.rows.back();
            row[6] = prev[2] > 0.0 ? row[2] / prev[2] : 1.0;
            row[7] = prev[3] > 0.0 ? row[3] / prev[3] : 1.0;
        }
        table.rows.push_back(std::move(row));
    }
    bool ok = true;
    double sup0 = table.rows.front()[2], int0 = table.rows.front()[3];
    for (const auto& row : table.rows) {
        if (row[2] > 4.0 * sup0 + 1e-15) ok = false;
        if (row[3] > 4.0 * int0 + 1e-15) ok = false;
    }
    const auto& last = table.rows.back();
    const auto& prev = table.rows[table.rows.size() - 2];
    if (std::abs(last[4] - prev[4]) > 0.1 * (std::abs(last[4]) + 1e-12)) ok = false;
    table.pass = ok;
    table.note = "normalized penalty metrics must stay within a factor 4 of the smallest "
                 "level and the terminal penalty mass must stabilize";
    return table;
}

StudyTable chaos_study(const ProblemSpec& prob, const SolverConfig& cfg,
                       const std::vector<int>& n_grid, int n_ref) {
    if (n_grid.empty()) throw ValidationError("population study needs a nonempty grid");
    for (std::size_t j = 0; j < n_grid.size(); ++j) {
        if (n_grid[j] < 1) throw ValidationError("population sizes must be >= 1");
        if (j > 0 && n_grid[j] <= n_grid[j - 1])
            throw ValidationError("population sizes must be strictly increasing");
    }
    if (n_grid.back() >= n_ref)
        throw ValidationError("reference population must exceed every grid entry");
    if (!prob.x0_sampler) throw ValidationError("problem spec needs an x0 sampler");

    auto solve_at = [&](int count) {
        SolverConfig run_cfg = cfg;
        run_cfg.particles = count;
        std::vector<Point> x0 = prob.x0_sampler(count, cfg.seed);
        return solve_penalized(prob.coeff, prob.driver, prob.terminal, prob.obstacle, x0,
                               run_cfg);
    };

    ParticleSolution ref = solve_at(n_ref);
    {
        ParticleSolution again = solve_at(n_ref);
        for (std::size_t j = 0; j < ref.Y.size(); ++j)
            if (ref.Y[j] != again.Y[j])
                throw NumericalError(
                    "repeated reference run produced different results; determinism broken");
    }

    const bool scalar = ref.y_dim == 1;
    StudyTable table;
    table.knob = "particles";
    table.columns = {"coupled_err", "ratio_coupled"};
    if (scalar) table.columns.push_back("law_err");

    for (int count : n_grid) {
        ParticleSolution sol = solve_at(count);
        double coupled = 0.0;
        for (int k = 0; k <= sol.steps; ++k) {
            double acc = 0.0;
            for (int i = 0; i < count; ++i) acc += (sol.y(k, i) - ref.y(k, i)).squaredNorm();
            coupled = std::max(coupled, acc / count);
        }
        double law = 0.0;
        if (scalar) {
            for (int k = 0; k <= sol.steps; ++k) {
                double w = w2_1d(sol.y_law(k), quantile_subsample(ref.y_law(k), count));
                law = std::max(law, w * w);
            }
        }
        table.knob_values.push_back(static_cast<double>(count));
        std::vector<double> row = {coupled, 1.0};
        if (!table.rows.empty()) {
            double prev = table.rows.back()[0];
            row[1] = prev > 0.0 ? coupled / prev : 1.0;
        }
        if (scalar) row.push_back(law);
        table.rows.push_back(std::move(row));
    }
    bool ok = true;
    for (std::size_t j = 1; j < table.rows.size(); ++j)
        if (!(table.rows[j][0] < table.rows[j - 1][0])) ok = false;
    table.pass = ok;
    table.note = "coupled distance to the reference population must decrease as the "
                 "population grows";
    return table;
}

StudyTable stability_experiment(const ProblemSpec& prob, const SolverConfig& cfg,
                                const std::vector<double>& eps_grid,
                                const Perturbation& pert) {
    if (eps_grid.empty()) throw ValidationError("stability study needs a nonempty eps grid");
    for (std::size_t j = 0; j < eps_grid.size(); ++j) {
        if (eps_grid[j] < 0.0) throw ValidationError("eps values must be nonnegative");
        if (j > 0 && eps_grid[j] <= eps_grid[j - 1])
            throw ValidationError("eps values must be strictly increasing");
    }
    if (!prob.x0_sampler) throw ValidationError("problem spec needs an x0 sampler");
    const int n = prob.obstacle.dim;
    if (pert.terminal_offset.size() != n || pert.driver_offset.size() != n)
        throw ValidationError("perturbation offsets must match the obstacle dimension");

    std::vector<Point> x0 = prob.x0_sampler(cfg.particles, cfg.seed);
    ParticleSolution base =
        solve_penalized(prob.coeff, prob.driver, prob.terminal, prob.obstacle, x0, cfg);
    const double dt = cfg.grid.dt();
    const double horizon = cfg.grid.horizon;

    StudyTable table;
    table.knob = "eps";
    table.columns = {"i_delta_sq", "sup_dy_sq", "int_dz_sq", "ratio_y", "ratio_total"};

    for (double eps : eps_grid) {
        TerminalSpec term = prob.terminal;
        DriverSpec drv = prob.driver;
        if (eps != 0.0) {
            auto g0 = prob.terminal.g;
            Point toff = eps * pert.terminal_offset;
            term.g = [g0, toff](const Point& x, const EmpiricalMeasure& mu) {
                return Point(g0(x, mu) + toff);
            };
            auto f0 = prob.driver.f;
            Point foff = eps * pert.driver_offset;
            if (foff.cwiseAbs().maxCoeff() > 0.0) {
                drv.f = [f0, foff](double t, const Point& x, const Point& y, const Matrix& z,
                                   const EmpiricalMeasure& lx, const EmpiricalMeasure& lyz) {
                    return f0 ? Point(f0(t, x, y, z, lx, lyz) + foff) : foff;
                };
            }
        }
        ParticleSolution sol =
            solve_penalized(prob.coeff, drv, term, prob.obstacle, x0, cfg);
        double sup_dy = 0.0, int_dz = 0.0;
        for (int k = 0; k <= sol.steps; ++k) {
            double acc = 0.0, accz = 0.0;
            for (int i = 0; i < sol.particles; ++i) {
                acc += (sol.y(k, i) - base.y(k, i)).squaredNorm();
                accz += (sol.z(k, i) - base.z(k, i)).squaredNorm();
            }
            sup_dy = std::max(sup_dy, acc / sol.particles);
            if (k < sol.steps) int_dz += accz / sol.particles * dt;
        }
        if (eps == 0.0 && (sup_dy != 0.0 || int_dz != 0.0))
            throw NumericalError(
                "zero perturbation produced a nonzero response; determinism broken");
        double i_delta = eps * eps * (pert.terminal_offset.squaredNorm() +
                                      horizon * pert.driver_offset.squaredNorm());
        double ratio_y = i_delta > 0.0 ? sup_dy / i_delta : 0.0;
        double ratio_total = i_delta > 0.0 ? (sup_dy + int_dz) / i_delta : 0.0;
        table.knob_values.push_back(eps);
        table.rows.push_back({i_delta, sup_dy, int_dz, ratio_y, ratio_total});
    }
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < table.rows.size(); ++j) {
        if (eps_grid[j] == 0.0) continue;
        any = true;
        rmin = std::min(rmin, table.rows[j][3]);
        rmax = std::max(rmax, table.rows[j][3]);
    }
    table.pass = any && rmin > 0.0 && rmax <= 2.0 * rmin;
    table.note = "response ratio sup mean|dY|^2 / I_delta^2 must agree within a factor 2 "
                 "across positive eps";
    return table;
}

std::vector<double> reflection_path(const ParticleSolution& sol, const ObstacleFunctional& H,
                                    unsigned threads) {
    const int N = sol.particles;
    const int M = sol.steps;
    const int n = sol.y_dim;
    const double dt = sol.grid.dt();
    std::vector<double> rec(static_cast<std::size_t>(M + 1) * N * n, 0.0);
    for (int k = 0; k < M; ++k) {
        std::vector<Point> cloud = sol.y_cloud(k);
        std::vector<double> rates(sol.k_pen.begin() + static_cast<std::ptrdiff_t>(k) * N,
                                  sol.k_pen.begin() + static_cast<std::ptrdiff_t>(k + 1) * N);
        std::vector<Point> incr = reflection_increment(H, cloud, sol.y_law(k), rates, threads);
        for (int i = 0; i < N; ++i)
            Eigen::Map<Point>(rec.data() + (static_cast<std::ptrdiff_t>(k + 1) * N + i) * n, n) =
                Eigen::Map<const Point>(
                    rec.data() + (static_cast<std::ptrdiff_t>(k) * N + i) * n, n) +
                dt * incr[static_cast<std::size_t>(i)];
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < rec.size(); ++j)
        worst = std::max(worst, std::abs(rec[j] - sol.R[j]));
    if (worst > 1e-10)
        throw NumericalError("stored reflection path disagrees with its recomputation");
    return rec;
}

} // namespace mfr
