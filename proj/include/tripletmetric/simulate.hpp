#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tripletmetric/core.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/rng.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

enum class FeatureKind {
    GaussianDiagonal,  ///< N(0, S), S diagonal with a random half chi, rest 1/chi
    GaussianAr,        ///< N(0, S), S[i][j] = rho^|i-j|
    Bernoulli,         ///< half the coordinates Bern(1-chi), half Bern(1-1/chi), clamped
};

inline const char* to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::GaussianDiagonal: return "gaussian-diagonal";
        case FeatureKind::GaussianAr: return "gaussian-ar";
        case FeatureKind::Bernoulli: return "bernoulli";
    }
    return "unknown";
}

inline FeatureKind feature_kind_from_string(const std::string& name) {
    if (name == "gaussian-diagonal") return FeatureKind::GaussianDiagonal;
    if (name == "gaussian-ar") return FeatureKind::GaussianAr;
    if (name == "bernoulli") return FeatureKind::Bernoulli;
    throw ConfigError("unknown feature distribution '" + name + "'");
}

/// Description of a synthetic feature distribution.
struct FeatureDistribution {
    FeatureKind kind = FeatureKind::GaussianDiagonal;
    Index p = 1;
    double chi = 1.0;  ///< anisotropy level, chi >= 1
    double rho = 0.8;  ///< autoregressive correlation, 0 < rho < 1
    std::uint64_t seed = 0;

    void validate() const {
        if (p < 1) throw ConfigError("feature dimension must be positive");
        if (kind == FeatureKind::GaussianAr) {
            if (!(rho > 0.0 && rho < 1.0))
                throw ConfigError("autoregressive correlation must lie in (0, 1), got " +
                                  std::to_string(rho));
        } else {
            if (!(chi >= 1.0))
                throw ConfigError("anisotropy parameter must be >= 1, got " + std::to_string(chi));
        }
    }
};

namespace detail {

/// Seeded partition of [0, p) into a "first half" subset (size floor(p/2))
/// and the rest, via a Fisher-Yates shuffle on the stage stream.
inline std::vector<Index> random_half(Index p, std::uint64_t key) {
    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index(0));
    rng::Sequence seq(rng::mix64(key ^ rng::kGoldenGamma));
    for (Index idx = p - 1; idx > 0; --idx) {
        const Index swap_with =
            static_cast<Index>(seq.next_below(static_cast<std::uint64_t>(idx) + 1));
        std::swap(order[static_cast<std::size_t>(idx)], order[static_cast<std::size_t>(swap_with)]);
    }
    order.resize(static_cast<std::size_t>(p / 2));
    return order;
}

} // namespace detail

/// Covariance matrix of a synthetic Gaussian feature distribution.
inline Eigen::MatrixXd feature_covariance(const FeatureDistribution& dist) {
    dist.validate();
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(dist.p, dist.p);
    switch (dist.kind) {
        case FeatureKind::GaussianDiagonal: {
            const std::uint64_t key = rng::stream_key(dist.seed, rng::Stage::Shuffle);
            sigma.diagonal().setConstant(1.0 / dist.chi);
            for (Index coord : detail::random_half(dist.p, key)) sigma(coord, coord) = dist.chi;
            break;
        }
        case FeatureKind::GaussianAr: {
            for (Index a = 0; a < dist.p; ++a)
                for (Index b = 0; b < dist.p; ++b)
                    sigma(a, b) = std::pow(dist.rho, std::abs(static_cast<double>(a - b)));
            break;
        }
        case FeatureKind::Bernoulli:
            throw ConfigError("bernoulli features have no Gaussian covariance");
    }
    return sigma;
}

/// Draws an n-by-p feature matrix from `dist`. Deterministic in the seed:
/// entry (i, j) depends only on the seed and its own stream position, so the
/// same seed always reproduces the same matrix.
inline Eigen::MatrixXd gen_features(const FeatureDistribution& dist, Index n) {
    dist.validate();
    if (n < 3) throw InvalidInputError("need at least 3 individuals, got " + std::to_string(n));
    const std::uint64_t key = rng::stream_key(dist.seed, rng::Stage::Features);
    const Index p = dist.p;
    Eigen::MatrixXd features(n, p);

    switch (dist.kind) {
        case FeatureKind::GaussianDiagonal: {
            const Eigen::VectorXd scale = feature_covariance(dist).diagonal().cwiseSqrt();
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < p; ++j)
                    features(i, j) =
                        scale(j) * rng::normal_at(key, static_cast<std::uint64_t>(i * p + j));
            break;
        }
        case FeatureKind::GaussianAr: {
            const Eigen::MatrixXd sigma = feature_covariance(dist);
            Eigen::LLT<Eigen::MatrixXd> llt(sigma);
            if (llt.info() != Eigen::Success)
                throw NumericalError("autoregressive covariance is not positive definite");
            Eigen::MatrixXd z(n, p);
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < p; ++j)
                    z(i, j) = rng::normal_at(key, static_cast<std::uint64_t>(i * p + j));
            features = z * llt.matrixU();
            break;
        }
        case FeatureKind::Bernoulli: {
            // Follows the stated parameterization literally; for chi > 1 the
            // probability 1 - chi falls below zero and is clamped.
            const std::uint64_t half_key = rng::stream_key(dist.seed, rng::Stage::Shuffle);
            Eigen::VectorXd prob = Eigen::VectorXd::Constant(p, 1.0 - 1.0 / dist.chi);
            for (Index coord : detail::random_half(p, half_key)) prob(coord) = 1.0 - dist.chi;
            prob = prob.cwiseMax(0.0).cwiseMin(1.0);
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < p; ++j)
                    features(i, j) =
                        rng::bernoulli_at(key, static_cast<std::uint64_t>(i * p + j), prob(j))
                            ? 1.0
                            : 0.0;
            break;
        }
    }
    return features;
}

/// Draws a ground-truth factor with i.i.d. standard normal entries, rescaled
/// so the induced metric K = A A^T has unit spectral norm. Returns (K, A).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gen_metric(Index p, Index r,
                                                              std::uint64_t seed) {
    if (r < 1 || r > p)
        throw ConfigError("metric rank must satisfy 1 <= r <= p, got r = " + std::to_string(r) +
                          ", p = " + std::to_string(p));
    const std::uint64_t key = rng::stream_key(seed, rng::Stage::Metric);
    Eigen::MatrixXd factor(p, r);
    for (Index a = 0; a < p; ++a)
        for (Index b = 0; b < r; ++b)
            factor(a, b) = rng::normal_at(key, static_cast<std::uint64_t>(a * r + b));
    // ||A A^T|| equals the largest eigenvalue of the r-by-r Gram matrix.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(factor.transpose() * factor,
                                                      Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0.0)) throw NumericalError("degenerate random factor");
    factor /= std::sqrt(top);
    Eigen::MatrixXd metric = factor * factor.transpose();
    return {std::move(metric), std::move(factor)};
}

/// Samples the training triplet set: every ordered triple (i, j, k) of
/// pairwise-distinct indices is included independently with probability s.
/// The returned list is in lexicographic order.
inline std::vector<Triplet> sample_triplets(Index n, double s, std::uint64_t seed) {
    if (s < 0.0 || s > 1.0)
        throw ConfigError("sampling rate must lie in [0, 1], got " + std::to_string(s));
    if (n < 3) throw InvalidInputError("need at least 3 individuals, got " + std::to_string(n));
    const std::uint64_t key = rng::stream_key(seed, rng::Stage::Triplets);
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(
        std::min<double>(1.05 * s * static_cast<double>(n) * (n - 1) * (n - 2) + 64.0, 1e8)));
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            for (Index k = 0; k < n; ++k) {
                if (k == i || k == j) continue;
                const std::uint64_t counter = static_cast<std::uint64_t>((i * n + j) * n + k);
                if (rng::to_unit(rng::at(key, counter)) < s) triplets.push_back({i, j, k});
            }
        }
    return triplets;
}

/// Probability that a triplet with margin m is answered +1.
inline double response_probability(double margin) {
    if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
    const double e = std::exp(margin);
    return e / (1.0 + e);
}

/// Draws one response per triplet: y = +1 with the logistic probability of
/// the triplet's margin under the ground-truth factor. Each draw depends only
/// on (seed, triplet position), so evaluation order is immaterial.
template <typename DerivedX, typename DerivedA>
TripletBatch sample_responses(const Eigen::MatrixBase<DerivedX>& features,
                              const Eigen::MatrixBase<DerivedA>& factor_star,
                              const std::vector<Triplet>& triplets, std::uint64_t seed) {
    validate_features(features);
    if (factor_star.rows() != features.cols())
        throw InvalidInputError("sample_responses: factor rows do not match feature count");
    const std::uint64_t key = rng::stream_key(seed, rng::Stage::Responses);
    TripletBatch batch;
    batch.n = features.rows();
    batch.responses.reserve(triplets.size());
    for (std::size_t idx = 0; idx < triplets.size(); ++idx) {
        const Triplet& t = triplets[idx];
        const double margin = static_cast<double>(triplet_margin(features, factor_star, t));
        const bool positive = rng::bernoulli_at(key, idx, response_probability(margin));
        batch.responses.push_back({t, positive ? 1 : -1});
    }
    return batch;
}

} // namespace tripletmetric
