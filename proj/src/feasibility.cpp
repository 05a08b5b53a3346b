#include "mfr/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfr/errors.hpp"
#include "mfr/parallel.hpp"

namespace mfr {

namespace {

// allowance for second-order terms in the discrete progress check
double curvature_allowance(const ObstacleFunctional& H) {
    double M = H.bound_M, L = H.lip_L;
    return 4.0 * M * M * M + 2.0 * M * M * L + 1.0;
}

} // namespace

double default_flow_dt(const ObstacleFunctional& H, double worst_h_minus) {
    return 1e-3 * (1.0 + worst_h_minus / (H.beta * H.beta));
}

FlowResult flow_to_feasible_point(const ObstacleFunctional& H, const Point& y0,
                                  double dt_flow, double max_t) {
    validate_obstacle(H);
    if (y0.size() != H.dim)
        throw ValidationError("flow start point dimension does not match the obstacle");
    auto dirac = [](const Point& p) { return EmpiricalMeasure({p}); };

    FlowResult res;
    res.point = y0;
    double h = H.eval(y0, dirac(y0));
    if (h >= 0.0) {
        res.certificate = h;
        return res;
    }
    const double beta2 = H.beta * H.beta;
    const double h0m = -h;
    const double dt = dt_flow > 0.0 ? dt_flow : default_flow_dt(H, h0m);
    const double cap = max_t > 0.0 ? max_t : 10.0 * (h0m / beta2 + dt);
    const double c2 = curvature_allowance(H);

    double t = 0.0;
    Point y = y0;
    while (h < 0.0) {
        if (t >= cap)
            throw NumericalError(
                "feasibility flow did not reach the constraint within its time budget; "
                "declared beta likely overstates the gradient lower bound");
        Point g = H.grad_y(y, dirac(y));
        y += dt * g;
        t += dt;
        ++res.steps_taken;
        double hn = H.eval(y, dirac(y));
        if (hn - h < beta2 * dt - c2 * dt * dt)
            throw NumericalError(
                "feasibility flow made too little progress in one step; declared beta or the "
                "sign condition on the derivatives does not hold along the flow");
        h = hn;
    }
    res.point = y;
    res.stop_time = t;
    res.certificate = h;
    const double allowed = (h0m / beta2) * (1.0 + dt * c2 / beta2) + dt + 1e-12;
    if (t > allowed)
        throw NumericalError("feasibility flow overshot the h_minus/beta^2 stop-time bound");
    return res;
}

ParticleFlowResult project_terminal_particles(const ObstacleFunctional& H,
                                              const std::vector<Point>& xi,
                                              double dt_flow, double max_t,
                                              double feas_tol, int max_rounds,
                                              unsigned threads) {
    validate_obstacle(H);
    const std::size_t N = xi.size();
    if (N == 0) throw ValidationError("terminal projection needs a nonempty cloud");
    for (const auto& p : xi)
        if (p.size() != H.dim)
            throw ValidationError("terminal cloud dimension does not match the obstacle");
    if (max_rounds < 1) throw ValidationError("terminal projection needs max_rounds >= 1");

    ParticleFlowResult res;
    res.points = xi;
    res.stop_times.assign(N, 0.0);
    res.certificates.assign(N, 0.0);

    const double beta2 = H.beta * H.beta;
    double worst = 0.0;
    {
        EmpiricalMeasure mu0(res.points);
        for (const auto& p : res.points) worst = std::max(worst, h_minus(H, p, mu0));
    }
    const double dt = dt_flow > 0.0 ? dt_flow : default_flow_dt(H, worst);
    const double cap = max_t > 0.0 ? max_t : 10.0 * (worst / beta2 + dt) * max_rounds;

    std::vector<char> active(N, 1);
    std::vector<Point> grads(N);
    double t = 0.0;

    for (int round = 1; round <= max_rounds; ++round) {
        res.rounds = round;
        bool any_active = std::any_of(active.begin(), active.end(), [](char a) { return a != 0; });
        while (any_active) {
            if (t >= cap)
                throw NumericalError(
                    "terminal projection did not reach feasibility within its time budget");
            EmpiricalMeasure mu(res.points);
            parallel_for(N, threads, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    if (!active[i]) continue;
                    double h = H.eval(res.points[i], mu);
                    if (h >= 0.0) {
                        active[i] = 0;
                        res.stop_times[i] = t;
                    } else {
                        grads[i] = H.grad_y(res.points[i], mu);
                    }
                }
            });
            any_active = false;
            for (std::size_t i = 0; i < N; ++i) {
                if (active[i]) {
                    res.points[i] += dt * grads[i];
                    any_active = true;
                }
            }
            if (any_active) t += dt;
        }
        EmpiricalMeasure mu(res.points);
        bool clean = true;
        for (std::size_t i = 0; i < N; ++i) {
            res.certificates[i] = H.eval(res.points[i], mu);
            if (res.certificates[i] < -feas_tol) {
                active[i] = 1; // the law moved after this particle froze; resume it
                clean = false;
            }
        }
        if (clean) {
            res.max_stop_time = *std::max_element(res.stop_times.begin(), res.stop_times.end());
            for (std::size_t i = 0; i < N; ++i) {
                double moved = (res.points[i] - xi[i]).norm();
                if (moved > H.bound_M * res.stop_times[i] + 1e-9)
                    throw NumericalError(
                        "terminal projection moved a particle farther than bound_M times its "
                        "stop time; declared bound_M is inconsistent");
            }
            return res;
        }
    }
    throw NumericalError("terminal projection kept regressing after " +
                         std::to_string(max_rounds) + " verification rounds");
}

} // namespace mfr
