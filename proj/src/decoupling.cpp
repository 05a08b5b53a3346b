#include "mfr/decoupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfr/errors.hpp"
#include "mfr/regression.hpp"

namespace mfr {

namespace {

void require_orientation(const MarkovProblem& prob, const EmpiricalMeasure& lambda) {
    const auto& H = prob.obstacle;
    if (H.dim != 1 || prob.coeff.state_dim != 1)
        throw ValidationError("decoupling field evaluation supports scalar state and value only");
    if (lambda.dim() != 1)
        throw ValidationError("population measure must be one-dimensional");
    // orientation spot check over the population atoms
    for (int i = 0; i < std::min(lambda.size(), 32); ++i) {
        const Point& v = lambda.atom(i);
        double gy = H.grad_y(v, lambda)[0];
        double lg = H.lions_grad(v, lambda, v)[0];
        if (!(gy < 0.0) || lg > 1e-12)
            throw ValidationError(
                "decoupling requires the obstacle to decrease in y and (weakly) in its mean "
                "component; flip the sign of H to match this orientation");
    }
}

// regression read-out of a cross-section at one grid time
double read_out(const ParticleSolution& sol, int k, double x, int degree, double ridge) {
    Matrix xs(sol.particles, 1);
    for (int i = 0; i < sol.particles; ++i) xs(i, 0) = sol.x(k, i)[0];
    PolyBasis basis(xs, degree);
    Matrix ys(sol.particles, 1);
    for (int i = 0; i < sol.particles; ++i) ys(i, 0) = sol.y(k, i)[0];
    RegressionResult fit = regress_conditional(basis.design(xs), ys, ridge);
    Point q(1);
    q[0] = x;
    return (basis.features(q) * fit.coeffs)(0, 0);
}

double local_penalty_mass(const ParticleSolution& sol, int k, double x) {
    const int N = sol.particles;
    double mean = 0.0;
    for (int i = 0; i < N; ++i) mean += sol.x(k, i)[0];
    mean /= N;
    double var = 0.0;
    for (int i = 0; i < N; ++i) {
        double d = sol.x(k, i)[0] - mean;
        var += d * d;
    }
    var /= N;
    double bw = std::max(std::sqrt(var) * std::pow(static_cast<double>(N), -0.2),
                         1e-12 * (1.0 + std::abs(x)));
    double acc = 0.0, nearest = 0.0, best = std::numeric_limits<double>::infinity();
    int cnt = 0;
    for (int i = 0; i < N; ++i) {
        double d = std::abs(sol.x(k, i)[0] - x);
        if (d <= bw) {
            acc += sol.k_pen_at(k, i);
            ++cnt;
        }
        if (d < best) {
            best = d;
            nearest = sol.k_pen_at(k, i);
        }
    }
    return cnt > 0 ? acc / cnt : nearest;
}

bool outside_support(const ParticleSolution& sol, int k, double x) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < sol.particles; ++i) {
        lo = std::min(lo, sol.x(k, i)[0]);
        hi = std::max(hi, sol.x(k, i)[0]);
    }
    double pad = 0.05 * (hi - lo + 1.0);
    return x < lo - pad || x > hi + pad;
}

} // namespace

FieldResult eval_u(const MarkovProblem& prob, const SolverConfig& base_cfg,
                   const FieldQuery& query) {
    prob.grid.validate();
    require_orientation(prob, query.lambda);
    if (query.x.size() != 1) throw ValidationError("query state must be scalar");
    const double T = prob.grid.horizon;
    if (query.t < 0.0 || query.t > T + 1e-12)
        throw ValidationError("query time lies outside the horizon");

    FieldResult res;
    if (query.t >= T - 1e-12) {
        EmpiricalMeasure law = query.lambda;
        res.u = prob.terminal.g(query.x, law)[0];
        auto g = prob.terminal.g;
        EmpiricalMeasure glaw =
            pushforward(law, [&](const Point& v) { return g(v, law); });
        Point up(1);
        up[0] = res.u;
        res.constraint_value = prob.obstacle.eval(up, glaw);
        res.penalty_mass = 0.0;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& a : law.atoms()) {
            lo = std::min(lo, a[0]);
            hi = std::max(hi, a[0]);
        }
        double pad = 0.05 * (hi - lo + 1.0);
        res.low_confidence = query.x[0] < lo - pad || query.x[0] > hi + pad;
        return res;
    }

    const double remaining = T - query.t;
    int steps = std::max(1, static_cast<int>(std::lround(prob.grid.steps * remaining / T)));
    SolverConfig cfg = base_cfg;
    cfg.grid = TimeGrid{remaining, steps};
    cfg.particles = query.lambda.size();
    cfg.t_offset = query.t;

    ParticleSolution sol = solve_penalized(prob.coeff, prob.driver, prob.terminal,
                                           prob.obstacle, query.lambda.atoms(), cfg);
    res.u = read_out(sol, 0, query.x[0], cfg.basis_degree, cfg.ridge);
    Point up(1);
    up[0] = res.u;
    res.constraint_value = prob.obstacle.eval(up, sol.y_law(0));
    res.penalty_mass = local_penalty_mass(sol, 0, query.x[0]);
    res.low_confidence = outside_support(sol, 0, query.x[0]);
    return res;
}

ContinuityReport continuity_probe(const MarkovProblem& prob, const SolverConfig& base_cfg,
                                  const FieldQuery& base, double dt_radius,
                                  double dx_radius, double dlambda_radius) {
    if (dt_radius < 0.0 || dx_radius < 0.0 || dlambda_radius < 0.0)
        throw ValidationError("continuity radii must be nonnegative");
    if (base.t + dt_radius > prob.grid.horizon + 1e-12)
        throw ValidationError("time radius reaches past the horizon");

    ContinuityReport rep;
    rep.u_base = eval_u(prob, base_cfg, base).u;

    auto shifted_lambda = [&](double dl) {
        std::vector<Point> atoms = base.lambda.atoms();
        for (auto& a : atoms) a[0] += dl;
        return EmpiricalMeasure(std::move(atoms));
    };

    for (int level = 0; level < 3; ++level) {
        double f = std::pow(0.5, level);
        ContinuityRow row;
        row.scale = f;
        if (dt_radius > 0.0) {
            FieldQuery q = base;
            q.t = base.t + dt_radius * f;
            row.modulus_t = std::abs(eval_u(prob, base_cfg, q).u - rep.u_base);
        }
        if (dx_radius > 0.0) {
            FieldQuery qp = base, qm = base;
            qp.x[0] += dx_radius * f;
            qm.x[0] -= dx_radius * f;
            row.modulus_x = std::max(std::abs(eval_u(prob, base_cfg, qp).u - rep.u_base),
                                     std::abs(eval_u(prob, base_cfg, qm).u - rep.u_base));
        }
        if (dlambda_radius > 0.0) {
            FieldQuery q = base;
            q.lambda = shifted_lambda(dlambda_radius * f);
            row.modulus_lambda = std::abs(eval_u(prob, base_cfg, q).u - rep.u_base);
        }
        row.modulus_max =
            std::max({row.modulus_t, row.modulus_x, row.modulus_lambda});
        rep.rows.push_back(row);
    }
    double m0 = rep.rows[0].modulus_max;
    double m1 = rep.rows[1].modulus_max;
    double m2 = rep.rows[2].modulus_max;
    rep.pass = (m2 <= 0.9 * m0 + 1e-12) && (m1 <= 1.1 * m0 + 1e-12) &&
               (m2 <= 1.1 * m1 + 1e-12);
    return rep;
}

ComplementarityReport complementarity_probe(const MarkovProblem& prob,
                                            const SolverConfig& base_cfg,
                                            const EmpiricalMeasure& lambda,
                                            const std::vector<double>& times,
                                            const std::vector<double>& states,
                                            double eps_h, double eps_mass) {
    prob.grid.validate();
    require_orientation(prob, lambda);
    if (times.empty() || states.empty())
        throw ValidationError("complementarity probe needs times and states");
    for (double t : times)
        if (t < 0.0 || t > prob.grid.horizon + 1e-12)
            throw ValidationError("complementarity probe time lies outside the horizon");

    SolverConfig cfg = base_cfg;
    cfg.grid = prob.grid;
    cfg.particles = lambda.size();
    cfg.t_offset = 0.0;
    ParticleSolution sol = solve_penalized(prob.coeff, prob.driver, prob.terminal,
                                           prob.obstacle, lambda.atoms(), cfg);

    ComplementarityReport rep;
    rep.eps_h = eps_h;
    rep.eps_mass = eps_mass;
    rep.pass = true;
    for (double t : times) {
        int k = static_cast<int>(std::lround(t / sol.grid.dt()));
        k = std::clamp(k, 0, sol.steps);
        EmpiricalMeasure law = sol.y_law(k);
        for (double x : states) {
            ComplementarityRow row;
            row.t = sol.grid.time(k);
            row.x = x;
            row.u = read_out(sol, k, x, cfg.basis_degree, cfg.ridge);
            Point up(1);
            up[0] = row.u;
            row.h_value = prob.obstacle.eval(up, law);
            row.penalty_mass = local_penalty_mass(sol, k, x);
            row.consistent = !(row.h_value > eps_h && row.penalty_mass > eps_mass);
            if (!row.consistent) rep.pass = false;
            rep.rows.push_back(row);
        }
    }
    return rep;
}

} // namespace mfr
