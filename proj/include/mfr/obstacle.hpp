#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfr/measure.hpp"
#include "mfr/point.hpp"

namespace mfr {

// Constraint functional H(y, mu) with its derivatives in y and in the
// measure argument. lions_grad(y, mu, v) is the measure derivative read
// at the point v. Second derivatives are optional; finite differences
// stand in for them where needed.
struct ObstacleFunctional {
    std::function<double(const Point&, const EmpiricalMeasure&)> eval;
    std::function<Point(const Point&, const EmpiricalMeasure&)> grad_y;
    std::function<Point(const Point&, const EmpiricalMeasure&, const Point&)> lions_grad;
    std::function<Matrix(const Point&, const EmpiricalMeasure&)> hess_yy;
    std::function<Matrix(const Point&, const EmpiricalMeasure&, const Point&)> grad_v_lions;

    double beta = 0.0;    // uniform lower bound on |grad_y|
    double bound_M = 0.0; // uniform bound on first and second derivatives
    double lip_L = 0.0;   // Lipschitz constant in (y, mu)
    std::optional<double> delta0; // strictness gap: |E[lions_grad]| <= (1-delta0)|grad_y|

    int dim = 1;
    // lions_grad does not depend on its first argument; enables O(N)
    // reflection sums instead of O(N^2)
    bool lions_y_invariant = false;
    std::string kind = "custom";
};

void validate_obstacle(const ObstacleFunctional& H);

double h_minus(const ObstacleFunctional& H, const Point& y, const EmpiricalMeasure& mu);

// Per-particle reflection direction weighted by penalty rates k:
//   out_i = grad_y(y_i, mu) k_i + (1/N) sum_j lions_grad(y_j, mu, y_i) k_j
std::vector<Point> reflection_increment(const ObstacleFunctional& H,
                                        const std::vector<Point>& cloud,
                                        const EmpiricalMeasure& mu,
                                        const std::vector<double>& k,
                                        unsigned threads = 1);

// Finite-difference probe of the measure derivative at atom `index`:
// moves that atom and rescales by the atom count.
Point lions_grad_fd(const ObstacleFunctional& H, const Point& y,
                    const EmpiricalMeasure& mu, int index, double eps = 1e-6);

// H(y, mu) = alpha.y + a * (alpha_prime . mean(mu)) + b
ObstacleFunctional make_affine(const Point& alpha, double a, const Point& alpha_prime,
                               double b, std::optional<double> delta0 = std::nullopt);

// C^2 scalar field on R^n with its derivatives.
struct SmoothScalarField {
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> grad;
    std::function<Matrix(const Point&)> hess; // optional
};

// C^2 function on R.
struct SmoothScalarFunction {
    std::function<double(double)> value;
    std::function<double(double)> deriv;
    std::function<double(double)> deriv2; // optional
};

// H(y, mu) = outer(y) + link(E_mu[inner(v)])
ObstacleFunctional make_separable(SmoothScalarField outer, SmoothScalarFunction link,
                                  SmoothScalarField inner, int dim, double beta,
                                  double bound_M, double lip_L,
                                  std::optional<double> delta0 = std::nullopt);

enum class ConditionStatus { pass, fail, skipped };

struct Witness {
    // named flattened vectors: "y", "v", "mu" (atoms concatenated), "y2", "mu2"
    std::vector<std::pair<std::string, std::vector<double>>> items;
    void put(const std::string& name, const Point& p);
    void put_measure(const std::string& name, const EmpiricalMeasure& mu);
};

struct ConditionCheck {
    std::string id;
    ConditionStatus status = ConditionStatus::skipped;
    double margin = 0.0; // smallest slack seen; negative means violated by that much
    Witness witness;     // configuration attaining the margin
    std::string note;
};

struct AssumptionReport {
    std::vector<ConditionCheck> conditions;
    bool all_pass() const;
    const ConditionCheck& by_id(const std::string& id) const;
};

struct SampleDomain {
    Point lo, hi;       // box for y, v and measure atoms
    int min_atoms = 2;
    int max_atoms = 12;
};

// Randomized falsifier for the standing conditions on H. Checks
//   bound_12      |grad_y| >= beta
//   bound_13      |grad_y| + |hess_yy| + |lions_grad| + |grad_v_lions| <= bound_M
//   lipschitz_14  both Lipschitz lines against lip_L
//   sign_15       grad_y.lions_grad >= 0 and lions_grad.lions_grad >= 0 across points
//   concavity_16  two-point concavity along sampled couplings
//   strict_38     |E[lions_grad]| <= (1 - delta0)|grad_y|, strict when delta0 is absent
// tol = 0 picks 1e-8 for analytic derivatives and 1e-4 where finite
// differences stand in.
AssumptionReport check_assumptions(const ObstacleFunctional& H, const SampleDomain& domain,
                                   int n_samples, std::uint64_t seed, double tol = 0.0);

} // namespace mfr
