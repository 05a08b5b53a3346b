#include "mfr/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfr/errors.hpp"

namespace mfr {

EmpiricalMeasure::EmpiricalMeasure(std::vector<Point> atoms)
    : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw ValidationError("empirical measure needs at least one atom");
    dim_ = static_cast<int>(atoms_[0].size());
    if (dim_ < 1) throw ValidationError("empirical measure atoms must have dimension >= 1");
    mean_ = Point::Zero(dim_);
    for (const auto& a : atoms_) {
        if (a.size() != dim_) throw ValidationError("empirical measure atoms have mixed dimensions");
        if (!all_finite(a)) throw ValidationError("empirical measure atom is not finite");
        mean_ += a;
    }
    mean_ /= static_cast<double>(atoms_.size());
}

Matrix EmpiricalMeasure::atoms_matrix() const {
    Matrix m(size(), dim_);
    for (int i = 0; i < size(); ++i) m.row(i) = atoms_[static_cast<std::size_t>(i)].transpose();
    return m;
}

EmpiricalMeasure empirical_from(std::vector<Point> atoms) {
    return EmpiricalMeasure(std::move(atoms));
}

EmpiricalMeasure empirical_from_scalars(const std::vector<double>& values) {
    std::vector<Point> atoms;
    atoms.reserve(values.size());
    for (double v : values) {
        Point p(1);
        p[0] = v;
        atoms.push_back(std::move(p));
    }
    return EmpiricalMeasure(std::move(atoms));
}

EmpiricalMeasure empirical_from_flat(const double* data, int n, int dim) {
    std::vector<Point> atoms;
    atoms.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        atoms.push_back(Eigen::Map<const Point>(data + static_cast<std::ptrdiff_t>(i) * dim, dim));
    return EmpiricalMeasure(std::move(atoms));
}

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu,
                             const std::function<Point(const Point&)>& f) {
    std::vector<Point> atoms;
    atoms.reserve(static_cast<std::size_t>(mu.size()));
    for (const auto& a : mu.atoms()) atoms.push_back(f(a));
    return EmpiricalMeasure(std::move(atoms));
}

double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != 1 || nu.dim() != 1)
        throw ValidationError("w2_1d requires one-dimensional measures");
    std::vector<double> x(static_cast<std::size_t>(mu.size()));
    std::vector<double> y(static_cast<std::size_t>(nu.size()));
    for (int i = 0; i < mu.size(); ++i) x[static_cast<std::size_t>(i)] = mu.atom(i)[0];
    for (int j = 0; j < nu.size(); ++j) y[static_cast<std::size_t>(j)] = nu.atom(j)[0];
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    // merge the two quantile partitions; each segment pairs one atom of each side
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    double wx = 1.0 / static_cast<double>(x.size());
    double wy = 1.0 / static_cast<double>(y.size());
    double ri = wx, rj = wy;
    while (i < x.size() && j < y.size()) {
        double m = std::min(ri, rj);
        double d = x[i] - y[j];
        acc += m * d * d;
        ri -= m;
        rj -= m;
        if (ri <= 1e-15) { ++i; ri = wx; }
        if (rj <= 1e-15) { ++j; rj = wy; }
    }
    return std::sqrt(std::max(0.0, acc));
}

double solve_assignment(const Matrix& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ValidationError("assignment cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    // shortest augmenting path with potentials, O(n^3)
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int r = 1; r <= n; ++r) {
        p[0] = r;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            int i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost(p[static_cast<std::size_t>(j)] - 1, j - 1);
    return total;
}

double w2_exact_small(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != nu.dim())
        throw ValidationError("w2_exact_small requires measures of equal dimension");
    if (mu.size() != nu.size())
        throw ValidationError("w2_exact_small requires equal atom counts");
    const int n = mu.size();
    if (n > 64)
        throw ValidationError("w2_exact_small supports at most 64 atoms");
    Matrix cost(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost(i, j) = (mu.atom(i) - nu.atom(j)).squaredNorm();
    return std::sqrt(std::max(0.0, solve_assignment(cost) / n));
}

EmpiricalMeasure quantile_subsample(const EmpiricalMeasure& mu, int n) {
    if (mu.dim() != 1)
        throw ValidationError("quantile_subsample requires a one-dimensional measure");
    if (n < 1 || n > mu.size())
        throw ValidationError("quantile_subsample size out of range");
    std::vector<double> x(static_cast<std::size_t>(mu.size()));
    for (int i = 0; i < mu.size(); ++i) x[static_cast<std::size_t>(i)] = mu.atom(i)[0];
    std::sort(x.begin(), x.end());
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto idx = static_cast<std::size_t>((i + 0.5) * mu.size() / n);
        if (idx >= x.size()) idx = x.size() - 1;
        out[static_cast<std::size_t>(i)] = x[idx];
    }
    return empirical_from_scalars(out);
}

} // namespace mfr
