#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "tripletmetric/error.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

namespace detail {

template <typename DerivedA, typename DerivedB>
void require_same_shape(const Eigen::MatrixBase<DerivedA>& a,
                        const Eigen::MatrixBase<DerivedB>& b,
                        const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidInputError(std::string(what) + ": shapes " + std::to_string(a.rows()) +
                                "-by-" + std::to_string(a.cols()) + " and " +
                                std::to_string(b.rows()) + "-by-" + std::to_string(b.cols()) +
                                " differ");
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (m.rows() != m.cols())
        throw InvalidInputError(std::string(what) + ": matrix must be square");
}

} // namespace detail

/// Squared Mahalanobis distance (x_i - x_j)^T K (x_i - x_j) between rows
/// i and j of `features`. Symmetric in (i, j) and zero when i == j.
template <typename DerivedX, typename DerivedK>
typename DerivedX::Scalar mahalanobis_sq(const Eigen::MatrixBase<DerivedX>& features,
                                         const Eigen::MatrixBase<DerivedK>& metric,
                                         Index i, Index j) {
    detail::require_square(metric, "mahalanobis_sq");
    if (metric.rows() != features.cols())
        throw InvalidInputError("mahalanobis_sq: metric dimension " +
                                std::to_string(metric.rows()) + " does not match feature count " +
                                std::to_string(features.cols()));
    if (i < 0 || j < 0 || i >= features.rows() || j >= features.rows())
        throw InvalidInputError("mahalanobis_sq: individual index out of range");
    using Vector = DenseVector<typename DerivedX::Scalar>;
    const Vector diff = (features.row(i) - features.row(j)).transpose();
    return diff.dot(metric * diff);
}

/// Mahalanobis distance; the square root of mahalanobis_sq, clamped at zero
/// so tiny negative values from a PSD-up-to-tolerance metric do not NaN.
template <typename DerivedX, typename DerivedK>
typename DerivedX::Scalar mahalanobis(const Eigen::MatrixBase<DerivedX>& features,
                                      const Eigen::MatrixBase<DerivedK>& metric,
                                      Index i, Index j) {
    using std::sqrt;
    using Scalar = typename DerivedX::Scalar;
    const Scalar q = mahalanobis_sq(features, metric, i, j);
    return q > Scalar(0) ? sqrt(q) : Scalar(0);
}

/// The symmetric comparison matrix M_t of a triplet t = (i, j, k):
///   M_t = x_i x_k^T + x_k x_i^T - x_i x_j^T - x_j x_i^T + x_j x_j^T - x_k x_k^T,
/// chosen so that trace(M_t K) = d_K^2(x_i, x_j) - d_K^2(x_i, x_k).
/// Used by tests and the curvature probe; the margin itself is computed in
/// factored form by triplet_margin.
template <typename DerivedX>
DenseMatrix<typename DerivedX::Scalar> comparison_matrix(const Eigen::MatrixBase<DerivedX>& features,
                                                         const Triplet& t) {
    t.validate(features.rows());
    using Vector = DenseVector<typename DerivedX::Scalar>;
    const Vector xi = features.row(t.i).transpose();
    const Vector xj = features.row(t.j).transpose();
    const Vector xk = features.row(t.k).transpose();
    return xi * xk.transpose() + xk * xi.transpose() - xi * xj.transpose() -
           xj * xi.transpose() + xj * xj.transpose() - xk * xk.transpose();
}

/// Margin of triplet t under the metric factor A:
///   ||A^T (x_i - x_j)||^2 - ||A^T (x_i - x_k)||^2 = trace(M_t A A^T).
/// O(p r) per call; never materializes M_t.
template <typename DerivedX, typename DerivedA>
typename DerivedX::Scalar triplet_margin(const Eigen::MatrixBase<DerivedX>& features,
                                         const Eigen::MatrixBase<DerivedA>& factor,
                                         const Triplet& t) {
    if (factor.rows() != features.cols())
        throw InvalidInputError("triplet_margin: factor rows " + std::to_string(factor.rows()) +
                                " do not match feature count " + std::to_string(features.cols()));
    t.validate(features.rows());
    return ((features.row(t.i) - features.row(t.j)) * factor).squaredNorm() -
           ((features.row(t.i) - features.row(t.k)) * factor).squaredNorm();
}

/// Orthogonal Procrustes alignment of `candidate` onto `reference`: finds the
/// orthogonal O minimizing ||candidate * O - reference||_F, via the SVD
/// U S W^T of candidate^T * reference with O = U W^T. When singular values
/// repeat or vanish the minimizer is not unique; any valid choice is returned
/// and only the residual is contractual.
template <typename DerivedZ, typename DerivedRef>
AlignmentResult<typename DerivedZ::Scalar> procrustes_align(
    const Eigen::MatrixBase<DerivedZ>& candidate,
    const Eigen::MatrixBase<DerivedRef>& reference) {
    detail::require_same_shape(candidate, reference, "procrustes_align");
    using Scalar = typename DerivedZ::Scalar;
    using Matrix = DenseMatrix<Scalar>;
    const Matrix cross = candidate.transpose() * reference;
    Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    AlignmentResult<Scalar> result;
    result.rotation = svd.matrixU() * svd.matrixV().transpose();
    result.aligned_error = (candidate * result.rotation - reference).norm();
    return result;
}

/// Frobenius distance between `candidate` and `reference` minimized over
/// orthogonal rotations of `candidate`.
template <typename DerivedZ, typename DerivedRef>
typename DerivedZ::Scalar aligned_error(const Eigen::MatrixBase<DerivedZ>& candidate,
                                        const Eigen::MatrixBase<DerivedRef>& reference) {
    return procrustes_align(candidate, reference).aligned_error;
}

/// Spectral norm of (a - b), computed with a symmetric eigensolver.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar metric_gap(const Eigen::MatrixBase<DerivedA>& a,
                                     const Eigen::MatrixBase<DerivedB>& b) {
    detail::require_same_shape(a, b, "metric_gap");
    detail::require_square(a, "metric_gap");
    using Scalar = typename DerivedA::Scalar;
    using Matrix = DenseMatrix<Scalar>;
    const Matrix diff = a - b;
    const Matrix sym = (diff + diff.transpose()) / Scalar(2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Frobenius-norm variant of metric_gap.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar metric_gap_frobenius(const Eigen::MatrixBase<DerivedA>& a,
                                               const Eigen::MatrixBase<DerivedB>& b) {
    detail::require_same_shape(a, b, "metric_gap_frobenius");
    detail::require_square(a, "metric_gap_frobenius");
    return (a - b).norm();
}

/// True when `metric` is symmetric to within `rel_tol` of its largest entry.
template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& metric,
                  typename Derived::Scalar rel_tol = typename Derived::Scalar(1e-10)) {
    if (metric.rows() != metric.cols()) return false;
    using Scalar = typename Derived::Scalar;
    const Scalar scale = metric.cwiseAbs().maxCoeff();
    const Scalar asym = (metric - metric.transpose()).cwiseAbs().maxCoeff();
    return asym <= rel_tol * (scale > Scalar(0) ? scale : Scalar(1));
}

/// Validates the metric invariants: square, finite, symmetric within 1e-10
/// relative, and eigenvalues no smaller than -1e-8 times the spectral norm.
template <typename Derived>
void validate_metric(const Eigen::MatrixBase<Derived>& metric) {
    using Scalar = typename Derived::Scalar;
    detail::require_square(metric, "validate_metric");
    if (!metric.allFinite()) throw DataError("metric contains non-finite entries");
    if (!is_symmetric(metric)) throw InvalidInputError("metric is not symmetric");
    using Matrix = DenseMatrix<Scalar>;
    Eigen::SelfAdjointEigenSolver<Matrix> es(metric, Eigen::EigenvaluesOnly);
    const Scalar lo = es.eigenvalues().minCoeff();
    const Scalar hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lo < Scalar(-1e-8) * (hi > Scalar(0) ? hi : Scalar(1)))
        throw InvalidInputError("metric has eigenvalue " + std::to_string(static_cast<double>(lo)) +
                                ", below the PSD tolerance");
}

/// Smallest eigenvalue of `metric` exceeding rel_tol times its largest
/// absolute eigenvalue. Errors when the metric has no such eigenvalue.
template <typename Derived>
typename Derived::Scalar smallest_nonzero_eigenvalue(
    const Eigen::MatrixBase<Derived>& metric,
    typename Derived::Scalar rel_tol = typename Derived::Scalar(1e-8)) {
    using Scalar = typename Derived::Scalar;
    detail::require_square(metric, "smallest_nonzero_eigenvalue");
    using Matrix = DenseMatrix<Scalar>;
    Eigen::SelfAdjointEigenSolver<Matrix> es(metric, Eigen::EigenvaluesOnly);
    const Scalar hi = es.eigenvalues().cwiseAbs().maxCoeff();
    Scalar best = Scalar(0);
    bool found = false;
    for (Index idx = 0; idx < es.eigenvalues().size(); ++idx) {
        const Scalar v = es.eigenvalues()(idx);
        if (v > rel_tol * hi && (!found || v < best)) {
            best = v;
            found = true;
        }
    }
    if (!found) throw NumericalError("metric has no nonzero eigenvalue");
    return best;
}

} // namespace tripletmetric
