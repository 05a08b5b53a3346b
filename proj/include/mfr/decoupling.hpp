#pragma once

#include <vector>

#include "mfr/backward_solver.hpp"
#include "mfr/measure.hpp"

namespace mfr {

// Query of the field u(t, x, lambda): value at time t, state x, when the
// population starts from lambda.
struct FieldQuery {
    double t = 0.0;
    Point x;
    EmpiricalMeasure lambda;
};

struct FieldResult {
    double u = 0.0;
    double constraint_value = 0.0; // H at (u, population law at the query time)
    double penalty_mass = 0.0;     // local penalty rate near the query state
    bool low_confidence = false;   // query outside the sampled support
};

// Markovian problem over [0, horizon]. The obstacle must be decreasing in y
// and weakly decreasing in its mean component; the driver must not read z.
struct MarkovProblem {
    CoefficientSpec coeff;
    DriverSpec driver;
    TerminalSpec terminal;
    ObstacleFunctional obstacle;
    TimeGrid grid;
};

// Evaluates the field by solving the particle system on [t, horizon] started
// from the atoms of lambda and regressing the time-t values on the state.
// Scalar state only.
FieldResult eval_u(const MarkovProblem& prob, const SolverConfig& base_cfg,
                   const FieldQuery& query);

struct ContinuityRow {
    double scale = 0.0;
    double modulus_t = 0.0, modulus_x = 0.0, modulus_lambda = 0.0, modulus_max = 0.0;
};

struct ContinuityReport {
    double u_base = 0.0;
    std::vector<ContinuityRow> rows; // radii shrink by halves
    bool pass = false;
};

// Evaluates the field at perturbed queries for shrinking radii and checks
// that the moduli of continuity shrink along with them. Perturbations share
// the base run's noise, so zero radii give exactly zero moduli.
ContinuityReport continuity_probe(const MarkovProblem& prob, const SolverConfig& base_cfg,
                                  const FieldQuery& base, double dt_radius,
                                  double dx_radius, double dlambda_radius);

struct ComplementarityRow {
    double t = 0.0, x = 0.0;
    double u = 0.0;
    double h_value = 0.0;
    double penalty_mass = 0.0;
    bool consistent = false;
};

struct ComplementarityReport {
    std::vector<ComplementarityRow> rows;
    double eps_h = 0.0, eps_mass = 0.0;
    bool pass = false;
};

// One population run from lambda; at each query (t, x) the field is read out
// by regression and the local penalty rate is averaged near x. A row is
// consistent when penalty mass vanishes wherever the constraint is slack.
ComplementarityReport complementarity_probe(const MarkovProblem& prob,
                                            const SolverConfig& base_cfg,
                                            const EmpiricalMeasure& lambda,
                                            const std::vector<double>& times,
                                            const std::vector<double>& states,
                                            double eps_h = 1e-3, double eps_mass = 1e-8);

} // namespace mfr
