#include "mfr/regression.hpp"

#include <functional>

#include "mfr/errors.hpp"

namespace mfr {

RegressionResult regress_conditional(const Matrix& design, const Matrix& targets,
                                     double ridge) {
    if (design.rows() != targets.rows())
        throw ValidationError("regression design and target row counts differ");
    if (design.rows() < 1) throw ValidationError("regression needs at least one sample");
    if (ridge < 0.0) throw ValidationError("ridge must be nonnegative");

    RegressionResult res;
    if (ridge > 0.0) {
        Matrix a = design.transpose() * design;
        a.diagonal().array() += ridge;
        res.coeffs = a.ldlt().solve(design.transpose() * targets);
    } else {
        Eigen::ColPivHouseholderQR<Matrix> qr(design);
        if (qr.rank() < design.cols())
            throw NumericalError(
                "regression design is rank deficient; lower basis_degree or raise ridge");
        res.coeffs = qr.solve(targets);
    }
    if (!all_finite(res.coeffs))
        throw NumericalError("regression produced non-finite coefficients");
    res.fitted = design * res.coeffs;
    return res;
}

namespace {

void enumerate_exponents(int coords, int degree, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
    // graded enumeration: all multi-indices of total degree 1..degree
    for (int total = 1; total <= degree; ++total) {
        std::function<void(int, int)> rec = [&](int pos, int left) {
            if (pos == coords - 1) {
                cur[static_cast<std::size_t>(pos)] = left;
                out.push_back(cur);
                return;
            }
            for (int e = left; e >= 0; --e) {
                cur[static_cast<std::size_t>(pos)] = e;
                rec(pos + 1, left - e);
            }
        };
        if (coords > 0) rec(0, total);
    }
}

} // namespace

PolyBasis::PolyBasis(const Matrix& samples, int degree) {
    if (degree < 0) throw ValidationError("basis degree must be nonnegative");
    if (samples.rows() < 1) throw ValidationError("basis needs at least one sample");
    in_dim_ = static_cast<int>(samples.cols());
    for (int c = 0; c < in_dim_; ++c) {
        double mean = samples.col(c).mean();
        double var = (samples.col(c).array() - mean).square().mean();
        if (var > 1e-13 * (1.0 + mean * mean)) active_.push_back(c);
    }
    if (degree > 0 && !active_.empty()) {
        std::vector<int> cur(active_.size(), 0);
        enumerate_exponents(static_cast<int>(active_.size()), degree, cur, exponents_);
    }
}

Matrix PolyBasis::design(const Matrix& samples) const {
    if (samples.cols() != in_dim_)
        throw ValidationError("basis input dimension mismatch");
    const auto n = samples.rows();
    Matrix d(n, n_terms());
    d.col(0).setOnes();
    for (std::size_t t = 0; t < exponents_.size(); ++t) {
        Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
        for (std::size_t a = 0; a < active_.size(); ++a) {
            int e = exponents_[t][a];
            for (int rep = 0; rep < e; ++rep)
                col.array() *= samples.col(active_[a]).array();
        }
        d.col(static_cast<Eigen::Index>(t) + 1) = col;
    }
    return d;
}

Eigen::RowVectorXd PolyBasis::features(const Point& x) const {
    if (x.size() != in_dim_) throw ValidationError("basis input dimension mismatch");
    Eigen::RowVectorXd row(n_terms());
    row[0] = 1.0;
    for (std::size_t t = 0; t < exponents_.size(); ++t) {
        double v = 1.0;
        for (std::size_t a = 0; a < active_.size(); ++a)
            for (int rep = 0; rep < exponents_[t][a]; ++rep) v *= x[active_[a]];
        row[static_cast<Eigen::Index>(t) + 1] = v;
    }
    return row;
}

} // namespace mfr
