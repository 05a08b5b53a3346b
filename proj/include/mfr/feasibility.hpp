#pragma once

#include <vector>

#include "mfr/obstacle.hpp"
#include "mfr/point.hpp"

namespace mfr {

struct FlowResult {
    Point point;
    double stop_time = 0.0;
    double certificate = 0.0; // H at the stop
    int steps_taken = 0;
};

struct ParticleFlowResult {
    std::vector<Point> points;
    std::vector<double> stop_times;
    std::vector<double> certificates; // H under the final cloud
    int rounds = 1;
    double max_stop_time = 0.0;
};

// Step size that resolves the expected crossing time h_minus/beta^2 with
// roughly a thousand steps.
double default_flow_dt(const ObstacleFunctional& H, double worst_h_minus);

// Follows y' = grad_y(H)(y, delta_y) until H(y, delta_y) >= 0. The gradient
// lower bound makes H grow at rate >= beta^2, which caps the stop time at
// h_minus(start)/beta^2 up to discretization; both facts are enforced.
FlowResult flow_to_feasible_point(const ObstacleFunctional& H, const Point& y0,
                                  double dt_flow = 0.0, double max_t = 0.0);

// Interacting version: every particle flows along grad_y(H)(., cloud law),
// freezes at its own first feasibility time, and keeps contributing to the
// law while frozen. After all freeze, feasibility is re-verified under the
// final cloud; violators resume, up to max_rounds passes.
ParticleFlowResult project_terminal_particles(const ObstacleFunctional& H,
                                              const std::vector<Point>& xi,
                                              double dt_flow = 0.0, double max_t = 0.0,
                                              double feas_tol = 1e-9, int max_rounds = 5,
                                              unsigned threads = 1);

} // namespace mfr
