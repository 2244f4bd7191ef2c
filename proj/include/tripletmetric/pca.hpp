#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "tripletmetric/error.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

/// Centers the columns and projects onto the top-k principal directions
/// (eigenvectors of the sample covariance, by descending eigenvalue, each
/// sign-fixed so its largest-magnitude loading is positive).
template <typename Derived>
DenseMatrix<typename Derived::Scalar> pca_project(const Eigen::MatrixBase<Derived>& features,
                                                  Index k) {
    using Scalar = typename Derived::Scalar;
    using Matrix = DenseMatrix<Scalar>;
    const Index n = features.rows();
    const Index p = features.cols();
    if (k < 1 || k > std::min(n, p))
        throw ConfigError("pca_project: component count must lie in [1, min(n, p)], got " +
                          std::to_string(k));
    if (n < 2) throw InvalidInputError("pca_project: need at least 2 rows");

    Matrix centered = features;
    centered.rowwise() -= features.colwise().mean();
    const Matrix covariance = centered.transpose() * centered / static_cast<Scalar>(n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(covariance);
    if (es.info() != Eigen::Success)
        throw NumericalError("pca_project: eigendecomposition failed");

    Matrix directions(p, k);
    for (Index c = 0; c < k; ++c) {
        DenseVector<Scalar> v = es.eigenvectors().col(p - 1 - c);
        Index top = 0;
        v.cwiseAbs().maxCoeff(&top);
        if (v(top) < Scalar(0)) v = -v;
        directions.col(c) = v;
    }
    return centered * directions;
}

/// pca_project followed by per-column standardization to mean zero and unit
/// standard deviation; zero-variance columns become zero.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> pca_standardize(const Eigen::MatrixBase<Derived>& features,
                                                      Index k) {
    using Scalar = typename Derived::Scalar;
    using Matrix = DenseMatrix<Scalar>;
    const Index n = features.rows();
    Matrix projected = pca_project(features, k);
    projected.rowwise() -= projected.colwise().mean().eval();
    for (Index c = 0; c < k; ++c) {
        const Scalar sd = std::sqrt(projected.col(c).squaredNorm() / static_cast<Scalar>(n));
        if (sd > Scalar(0))
            projected.col(c) /= sd;
        else
            projected.col(c).setZero();
    }
    return projected;
}

} // namespace tripletmetric
