#pragma once

#include <Eigen/Dense>

namespace ndeepc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace numerics {

/// Default relative singular-value cutoff used by the SVD helpers.
inline constexpr double kDefaultSvdTolerance = 1e-10;

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// `tol * sigma_max` are treated as zero.
Matrix pseudo_inverse(const Matrix &m, double tol = kDefaultSvdTolerance);

/// Orthonormal basis of {v : M v = 0}, one basis vector per column.
/// Returns a cols x 0 matrix when M has full column rank.
Matrix nullspace_basis(const Matrix &m, double tol = kDefaultSvdTolerance);

struct RankInfo {
    Vector singular_values;  // descending
    Index rank = 0;
    double min_singular_value = 0.0;  // smallest of min(rows, cols) values
    bool full_row_rank = false;
};

RankInfo rank_info(const Matrix &m, double tol = kDefaultSvdTolerance);

/// Throws NumericalError if any entry is NaN or infinite.
void require_finite(const Matrix &m, const char *what);

}  // namespace numerics
}  // namespace ndeepc
