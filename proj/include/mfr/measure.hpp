#pragma once

#include <functional>
#include <vector>

#include "mfr/point.hpp"

namespace mfr {

// Uniformly weighted empirical measure: N atoms in R^n, each with mass 1/N.
class EmpiricalMeasure {
public:
    explicit EmpiricalMeasure(std::vector<Point> atoms);

    int size() const { return static_cast<int>(atoms_.size()); }
    int dim() const { return dim_; }
    const Point& atom(int i) const { return atoms_[static_cast<std::size_t>(i)]; }
    const std::vector<Point>& atoms() const { return atoms_; }

    // precomputed at construction; repeated eval stays O(1) in the atom count
    const Point& mean() const { return mean_; }
    Matrix atoms_matrix() const; // N x dim

private:
    std::vector<Point> atoms_;
    int dim_;
    Point mean_;
};

EmpiricalMeasure empirical_from(std::vector<Point> atoms);
EmpiricalMeasure empirical_from_scalars(const std::vector<double>& values);
// Rows of a contiguous (N*dim) buffer become atoms.
EmpiricalMeasure empirical_from_flat(const double* data, int n, int dim);

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu,
                             const std::function<Point(const Point&)>& f);

// Exact W2 between one-dimensional clouds via quantile coupling.
double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Exact W2 for equal atom counts up to 64 via optimal assignment.
double w2_exact_small(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Minimum-cost perfect matching value of a square cost matrix.
double solve_assignment(const Matrix& cost);

// Evenly spaced order statistics of a 1-d cloud, as an n-atom measure.
EmpiricalMeasure quantile_subsample(const EmpiricalMeasure& mu, int n);

} // namespace mfr
