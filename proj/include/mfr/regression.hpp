#pragma once

#include <vector>

#include "mfr/point.hpp"

namespace mfr {

struct RegressionResult {
    Matrix coeffs; // p x q
    Matrix fitted; // N x q
};

// Least squares of each target column on the design columns, with an
// optional ridge term. ridge = 0 demands full column rank.
RegressionResult regress_conditional(const Matrix& design, const Matrix& targets,
                                     double ridge);

// Monomials of total degree <= degree over the coordinates of a sample cloud
// that actually vary. Coordinates whose sample variance vanishes are dropped,
// so a degenerate cloud collapses to the intercept and the regression
// reduces to the cross-sectional mean.
class PolyBasis {
public:
    PolyBasis(const Matrix& samples, int degree);

    int n_terms() const { return static_cast<int>(exponents_.size()) + 1; }
    int input_dim() const { return in_dim_; }
    const std::vector<int>& active_coords() const { return active_; }

    Matrix design(const Matrix& samples) const;
    Eigen::RowVectorXd features(const Point& x) const;

private:
    int in_dim_ = 0;
    std::vector<int> active_;
    std::vector<std::vector<int>> exponents_; // per term, per active coordinate
};

} // namespace mfr
