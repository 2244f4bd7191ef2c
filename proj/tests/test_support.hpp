#pragma once

// Shared generators and independent oracles for the test suites. Everything
// here is deliberately separate from the library implementation paths it
// checks: margins via materialized comparison matrices, spectral norms via
// power iteration, derivatives via finite differences.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "tripletmetric/core.hpp"
#include "tripletmetric/descent.hpp"
#include "tripletmetric/rng.hpp"
#include "tripletmetric/spectral.hpp"
#include "tripletmetric/types.hpp"

namespace testsupport {

using tripletmetric::Index;
using tripletmetric::Triplet;
using tripletmetric::TripletBatch;

/// Deterministic scalar generator for test fixtures.
class TestRng {
public:
    explicit TestRng(std::uint64_t seed) : seq_(tripletmetric::rng::mix64(seed + 1)) {}

    double uniform() { return seq_.next_unit(); }

    double normal() {
        const double u1 = (static_cast<double>(seq_.next_bits() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = seq_.next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Index below(Index bound) {
        return static_cast<Index>(seq_.next_below(static_cast<std::uint64_t>(bound)));
    }

    Eigen::MatrixXd gaussian(Index rows, Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }

    /// Haar-ish random orthogonal matrix from the QR of a Gaussian matrix.
    Eigen::MatrixXd orthogonal(Index dim) {
        const Eigen::MatrixXd g = gaussian(dim, dim);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ();
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Index c = 0; c < dim; ++c)
            if (r(c, c) < 0) q.col(c) = -q.col(c);
        return q;
    }

    /// Random symmetric PSD matrix of the given dimension.
    Eigen::MatrixXd psd(Index dim) {
        const Eigen::MatrixXd g = gaussian(dim, dim + 2);
        return g * g.transpose() / static_cast<double>(dim);
    }

    Triplet triplet(Index n) {
        Triplet t;
        t.i = below(n);
        do { t.j = below(n); } while (t.j == t.i);
        do { t.k = below(n); } while (t.k == t.i || t.k == t.j);
        return t;
    }

    TripletBatch batch(Index n, Index count) {
        count = std::min(count, n * (n - 1) * (n - 2));  // distinct ordered triples available
        TripletBatch b;
        b.n = n;
        b.responses.reserve(static_cast<std::size_t>(count));
        std::set<std::tuple<Index, Index, Index>> seen;
        while (static_cast<Index>(b.responses.size()) < count) {
            const Triplet t = triplet(n);
            if (!seen.insert({t.i, t.j, t.k}).second) continue;
            b.responses.push_back({t, uniform() < 0.5 ? 1 : -1});
        }
        return b;
    }

private:
    tripletmetric::rng::Sequence seq_;
};

/// Margin oracle: materializes M_t and the full metric product.
inline double margin_by_trace(const Eigen::MatrixXd& features, const Eigen::MatrixXd& factor,
                              const Triplet& t) {
    const Eigen::MatrixXd m = tripletmetric::comparison_matrix(features, t);
    return (m * factor * factor.transpose()).trace();
}

/// Spectral-norm oracle for symmetric matrices: plain power iteration.
inline double power_iteration_norm(const Eigen::MatrixXd& sym, Index iters = 500,
                                   std::uint64_t seed = 17) {
    TestRng rng(seed);
    Eigen::VectorXd v = rng.gaussian(sym.rows(), 1);
    v.normalize();
    double estimate = 0.0;
    for (Index it = 0; it < iters; ++it) {
        Eigen::VectorXd w = sym * v;
        estimate = w.norm();
        if (estimate == 0.0) return 0.0;
        v = w / estimate;
    }
    return estimate;
}

/// Central finite differences of the loss with respect to every factor entry.
inline Eigen::MatrixXd fd_gradient(const TripletBatch& batch, const Eigen::MatrixXd& features,
                                   const Eigen::MatrixXd& factor, double h = 1e-5) {
    Eigen::MatrixXd grad(factor.rows(), factor.cols());
    Eigen::MatrixXd probe = factor;
    for (Index a = 0; a < factor.rows(); ++a)
        for (Index b = 0; b < factor.cols(); ++b) {
            probe(a, b) = factor(a, b) + h;
            const double up = tripletmetric::loss(batch, features, probe);
            probe(a, b) = factor(a, b) - h;
            const double down = tripletmetric::loss(batch, features, probe);
            probe(a, b) = factor(a, b);
            grad(a, b) = (up - down) / (2.0 * h);
        }
    return grad;
}

/// Second-order finite difference of the loss along direction V.
inline double fd_quadratic_form(const TripletBatch& batch, const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& factor, const Eigen::MatrixXd& direction,
                                double h = 1e-4) {
    const double up = tripletmetric::loss(batch, features, factor + h * direction);
    const double mid = tripletmetric::loss(batch, features, factor);
    const double down = tripletmetric::loss(batch, features, factor - h * direction);
    return (up - 2.0 * mid + down) / (h * h);
}

/// Exact expected-win tournament for an anchor under the response model:
/// for every item pair {j, k}, j's win count is the exact probability that
/// a comparison (anchor, j, k) answers +1.
inline tripletmetric::AnchorTournament expected_win_tournament(const Eigen::MatrixXd& features,
                                                               const Eigen::MatrixXd& factor,
                                                               Index anchor) {
    const Index n = features.rows();
    tripletmetric::AnchorTournament t;
    t.anchor = anchor;
    t.n_items = n;
    t.wins = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd dsq(n);
    for (Index j = 0; j < n; ++j)
        dsq(j) = j == anchor
                     ? 0.0
                     : ((features.row(anchor) - features.row(j)) * factor).squaredNorm();
    for (Index j = 0; j < n; ++j) {
        if (j == anchor) continue;
        for (Index k = j + 1; k < n; ++k) {
            if (k == anchor) continue;
            const double p = 1.0 / (1.0 + std::exp(-(dsq(j) - dsq(k))));
            t.wins(j, k) = p;
            t.wins(k, j) = 1.0 - p;
        }
    }
    return t;
}

/// Relative error with a floor of 1 in the denominator.
inline double rel_error(double value, double reference) {
    return std::abs(value - reference) /
           std::max({1.0, std::abs(value), std::abs(reference)});
}

/// Relative Frobenius error of two matrices.
inline double rel_error(const Eigen::MatrixXd& value, const Eigen::MatrixXd& reference) {
    const double scale = std::max(1e-300, reference.norm());
    return (value - reference).norm() / scale;
}

} // namespace testsupport
