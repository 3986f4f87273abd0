#include "ndeepc/numerics.hpp"

#include <string>

#include "ndeepc/error.hpp"

namespace ndeepc::numerics {
namespace {

template <int Options>
Eigen::BDCSVD<Matrix> decompose(const Matrix &m) {
    if (m.size() == 0) {
        throw DimensionError("SVD of an empty " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + " matrix");
    }
    Eigen::BDCSVD<Matrix> svd(m, Options);
    if (svd.info() != Eigen::Success) {
        throw NumericalError("SVD did not converge");
    }
    return svd;
}

Index count_above(const Vector &sv, double tol) {
    if (sv.size() == 0) return 0;
    const double cutoff = tol * sv(0);
    Index r = 0;
    while (r < sv.size() && sv(r) > cutoff && sv(r) > 0.0) ++r;
    return r;
}

}  // namespace

void require_finite(const Matrix &m, const char *what) {
    if (!m.allFinite()) {
        throw NumericalError(std::string(what) + " contains NaN or Inf");
    }
}

Matrix pseudo_inverse(const Matrix &m, double tol) {
    require_finite(m, "pseudo_inverse input");
    const auto svd = decompose<Eigen::ComputeThinU | Eigen::ComputeThinV>(m);
    const Vector &sv = svd.singularValues();
    const Index r = count_above(sv, tol);
    if (r == 0) return Matrix::Zero(m.cols(), m.rows());
    const auto v = svd.matrixV().leftCols(r);
    const auto u = svd.matrixU().leftCols(r);
    return v * sv.head(r).cwiseInverse().asDiagonal() * u.transpose();
}

Matrix nullspace_basis(const Matrix &m, double tol) {
    require_finite(m, "nullspace_basis input");
    const auto svd = decompose<Eigen::ComputeFullV>(m);
    const Index r = count_above(svd.singularValues(), tol);
    return svd.matrixV().rightCols(m.cols() - r);
}

RankInfo rank_info(const Matrix &m, double tol) {
    require_finite(m, "rank_info input");
    const auto svd = decompose<0>(m);
    RankInfo info;
    info.singular_values = svd.singularValues();
    info.rank = count_above(info.singular_values, tol);
    info.min_singular_value =
        info.singular_values.size() ? info.singular_values(info.singular_values.size() - 1) : 0.0;
    info.full_row_rank = info.rank == m.rows();
    return info;
}

}  // namespace ndeepc::numerics
