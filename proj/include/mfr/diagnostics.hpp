#pragma once

#include <string>
#include <vector>

#include "mfr/backward_solver.hpp"
#include "mfr/obstacle.hpp"

namespace mfr {

struct DiagnosticsReport {
    // constraint metrics
    double sup_h_minus_sq = 0.0;   // max over k of mean_i h_minus^2
    double int_h_minus_sq = 0.0;   // time integral of mean_i h_minus^2
    double skorokhod_defect = 0.0; // |integral of mean_i H k_pen dt|
    double skorokhod_signed = 0.0;
    // penalty mass and moments
    double k_terminal_mean = 0.0;
    double k_terminal_sq_mean = 0.0;
    double sup_mean_y2 = 0.0;
    double sup_mean_y4 = 0.0;
    double int_mean_z2 = 0.0;
    // per-step series
    std::vector<double> t;
    std::vector<double> mean_h_minus_sq;
    std::vector<double> sup_h_minus; // max_i h_minus at each k
    std::vector<double> defect_partial;
    std::vector<double> mean_k;
    Matrix mean_y, std_y; // (M+1) x y_dim
};

DiagnosticsReport constraint_metrics(const ParticleSolution& sol,
                                     const ObstacleFunctional& H, unsigned threads = 1);

struct StudyTable {
    std::string knob;
    std::vector<double> knob_values;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows; // aligned with columns
    bool pass = false;
    std::string note;

    double at(std::size_t row, const std::string& column) const;
};

// Reruns the solver across penalty levels with common noise and tabulates
// the penalization error metrics, normalized by the rates they should decay
// at. Passes when the normalized metrics stay bounded across the grid (no
// growth beyond a factor 4 of the first row) and the terminal penalty mass
// stabilizes.
StudyTable penalty_rate_study(const ProblemSpec& prob, const SolverConfig& cfg,
                              const std::vector<double>& m_grid);

// Coupled particle-limit study: populations share their Brownian and initial
// draws with a larger reference population, so per-particle distances measure
// the propagation-of-chaos error directly. Passes when the coupled error
// decreases along the grid.
StudyTable chaos_study(const ProblemSpec& prob, const SolverConfig& cfg,
                       const std::vector<int>& n_grid, int n_ref);

struct Perturbation {
    Point terminal_offset; // added to the terminal values, scaled by eps
    Point driver_offset;   // added to the driver, scaled by eps
};

// Perturbs the data by eps * offsets and reports the response of (Y, Z)
// relative to the size of the data perturbation. Passes when the response
// ratios agree within a factor 2 across positive eps.
StudyTable stability_experiment(const ProblemSpec& prob, const SolverConfig& cfg,
                                const std::vector<double>& eps_grid,
                                const Perturbation& pert);

// Recomputes the cumulative reflection term from the stored cloud and rates,
// checks it against the solution, and returns it.
std::vector<double> reflection_path(const ParticleSolution& sol, const ObstacleFunctional& H,
                                    unsigned threads = 1);

} // namespace mfr
