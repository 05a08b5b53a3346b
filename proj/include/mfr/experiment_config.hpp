#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfr/backward_solver.hpp"
#include "mfr/measure.hpp"

namespace mfr {

struct CheckSettings {
    bool present = false;
    Point box_lo, box_hi;
    int min_atoms = 2, max_atoms = 12;
    int samples = 200;
    double tol = 0.0; // 0 = automatic
    std::uint64_t seed = 7;
};

struct PenaltyStudySettings {
    bool present = false;
    std::vector<double> grid;
};

struct ChaosStudySettings {
    bool present = false;
    std::vector<int> grid;
    int reference = 0;
};

struct StabilityStudySettings {
    bool present = false;
    std::vector<double> eps;
    Point terminal_offset, driver_offset;
};

struct DecouplingQuery {
    double t = 0.0;
    double x = 0.0;
};

struct DecouplingSettings {
    bool present = false;
    std::optional<EmpiricalMeasure> lambda;
    std::vector<DecouplingQuery> queries;
    bool have_radii = false;
    double dt_radius = 0.0, dx_radius = 0.0, dlambda_radius = 0.0;
    bool have_complementarity = false;
    std::vector<double> comp_times, comp_states;
    double eps_h = 1e-3, eps_mass = 1e-8;
};

struct ExperimentConfig {
    bool problem_present = false;
    ProblemSpec problem;
    int y_dim = 1, x_dim = 1, noise_dim = 1;
    double horizon = 1.0;

    bool solver_present = false;
    SolverConfig solver;

    CheckSettings check;
    PenaltyStudySettings penalty_study;
    ChaosStudySettings chaos;
    StabilityStudySettings stability;
    DecouplingSettings decoupling;

    std::string out_dir = "out";
    std::vector<std::string> formats = {"json", "csv"};

    // normalized echo of the configuration with defaults filled in
    nlohmann::json resolved;
};

// Parses and validates a configuration document. Unknown keys anywhere are
// rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

} // namespace mfr
