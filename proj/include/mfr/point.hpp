#pragma once

#include <Eigen/Dense>

namespace mfr {

using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Point& p) { return p.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

} // namespace mfr
