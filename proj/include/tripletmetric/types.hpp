#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tripletmetric/error.hpp"

namespace tripletmetric {

using Index = Eigen::Index;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Feature sets are plain dense n-by-p matrices with one row per individual.
// Factors are p-by-r, metrics are symmetric PSD p-by-p. The validators below
// enforce the corresponding invariants at module boundaries.

/// One query "is individual i closer to j or to k?".
struct Triplet {
    Index i = 0;
    Index j = 0;
    Index k = 0;

    bool distinct() const { return i != j && j != k && i != k; }

    void validate(Index n) const {
        if (!distinct())
            throw InvalidInputError("triplet indices must be pairwise distinct");
        if (i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n)
            throw InvalidInputError("triplet index out of range");
    }

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// A triplet together with its observed response, y in {-1, +1}.
struct TripletResponse {
    Triplet t;
    int y = 1;

    friend bool operator==(const TripletResponse&, const TripletResponse&) = default;
};

/// The training data: responses over a sampled triplet set.
struct TripletBatch {
    std::vector<TripletResponse> responses;
    Index n = 0;                 ///< number of individuals the indices refer to
    double sampling_rate = 1.0;  ///< inclusion probability used to draw the set

    Index size() const { return static_cast<Index>(responses.size()); }
    bool empty() const { return responses.empty(); }

    void validate() const {
        if (n < 3) throw InvalidInputError("triplet batch needs at least 3 individuals");
        if (sampling_rate <= 0.0 || sampling_rate > 1.0)
            throw InvalidInputError("sampling rate must lie in (0, 1]");
        std::vector<std::uint64_t> keys;
        keys.reserve(responses.size());
        for (const TripletResponse& r : responses) {
            r.t.validate(n);
            if (r.y != 1 && r.y != -1)
                throw InvalidInputError("responses must be -1 or +1");
            const auto un = static_cast<std::uint64_t>(n);
            keys.push_back((static_cast<std::uint64_t>(r.t.i) * un +
                            static_cast<std::uint64_t>(r.t.j)) *
                               un +
                           static_cast<std::uint64_t>(r.t.k));
        }
        std::sort(keys.begin(), keys.end());
        if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
            throw InvalidInputError("triplet batch contains duplicate ordered triples");
    }
};

/// Result of orthogonally aligning one factor onto another.
template <typename Scalar>
struct AlignmentResult {
    DenseMatrix<Scalar> rotation;  ///< r-by-r orthogonal matrix
    Scalar aligned_error = 0;      ///< Frobenius residual after rotation
};

using AlignmentResultXd = AlignmentResult<double>;

/// Checks the feature-set invariants: n >= 3, p >= 1, finite entries.
template <typename Derived>
void validate_features(const Eigen::MatrixBase<Derived>& features) {
    if (features.rows() < 3)
        throw InvalidInputError("feature set needs at least 3 individuals, got " +
                                std::to_string(features.rows()));
    if (features.cols() < 1)
        throw InvalidInputError("feature set needs at least 1 feature column");
    if (!features.allFinite())
        throw DataError("feature set contains non-finite entries");
}

/// Checks the factor invariants: p-by-r with 1 <= r <= p, finite entries.
template <typename Derived>
void validate_factor(const Eigen::MatrixBase<Derived>& factor) {
    if (factor.cols() < 1 || factor.cols() > factor.rows())
        throw InvalidInputError("factor must be p-by-r with 1 <= r <= p, got " +
                                std::to_string(factor.rows()) + "-by-" +
                                std::to_string(factor.cols()));
    if (!factor.allFinite())
        throw DataError("factor contains non-finite entries");
}

} // namespace tripletmetric
