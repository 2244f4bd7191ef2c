#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tripletmetric/core.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/rng.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

enum class OutcomeMetric {
    AbsoluteDifference,  ///< |a - b| on scalar outputs
    Euclidean,           ///< ||a - b|| on vector outputs
};

inline const char* to_string(OutcomeMetric metric) {
    return metric == OutcomeMetric::AbsoluteDifference ? "absolute-difference" : "euclidean";
}

inline OutcomeMetric outcome_metric_from_string(const std::string& name) {
    if (name == "absolute-difference") return OutcomeMetric::AbsoluteDifference;
    if (name == "euclidean") return OutcomeMetric::Euclidean;
    throw ConfigError("unknown outcome metric '" + name + "'");
}

/// Predictor outputs for every individual, plus the metric used on them.
struct PredictionSet {
    Eigen::MatrixXd outputs;  ///< one row per individual
    OutcomeMetric outcome_metric = OutcomeMetric::Euclidean;

    void validate() const {
        if (!outputs.allFinite()) throw DataError("predictions contain non-finite values");
        if (outcome_metric == OutcomeMetric::AbsoluteDifference && outputs.cols() != 1)
            throw InvalidInputError("absolute-difference outcome metric needs scalar outputs");
    }

    double distance(Index i, Index j) const {
        return (outputs.row(i) - outputs.row(j)).norm();
    }
};

/// Predictions of the linear embedding x -> A^T x; with the Euclidean
/// outcome metric this predictor is exactly 1-Lipschitz under A A^T.
template <typename DerivedX, typename DerivedA>
PredictionSet embedding_predictions(const Eigen::MatrixBase<DerivedX>& features,
                                    const Eigen::MatrixBase<DerivedA>& factor) {
    if (factor.rows() != features.cols())
        throw InvalidInputError("embedding_predictions: factor rows do not match feature count");
    PredictionSet predictions;
    predictions.outputs = (features * factor).template cast<double>();
    predictions.outcome_metric = OutcomeMetric::Euclidean;
    return predictions;
}

/// Empirical Lipschitz measurement of a predictor against a metric.
struct AuditReport {
    double l_max = 0.0;                   ///< largest finite ratio
    bool infinite = false;                ///< some pair had d = 0 but D > 0
    Index zero_distance_violations = 0;   ///< count of such pairs
    Index pairs_evaluated = 0;
    Index pairs_skipped_zero = 0;         ///< pairs with d = 0 and D = 0
    double q50 = 0.0;                     ///< median of the finite ratios
    double q90 = 0.0;
    double q99 = 0.0;
    Index finite_ratios = 0;
};

/// Measures the ratios D(A(x_i), A(x_j)) / d_K(x_i, x_j) over unordered
/// pairs: exhaustively when n(n-1)/2 <= pair_cap, otherwise over a seeded
/// uniform sample of pair_cap pairs (with replacement). Pairs at metric
/// distance zero are skipped when the outputs agree and flagged as
/// violations otherwise.
template <typename DerivedX, typename DerivedK>
AuditReport audit(const PredictionSet& predictions, const Eigen::MatrixBase<DerivedX>& features,
                  const Eigen::MatrixBase<DerivedK>& metric, Index pair_cap = 2000000,
                  std::uint64_t seed = 0) {
    predictions.validate();
    const Index n = features.rows();
    if (n < 2) throw InvalidInputError("audit: need at least 2 individuals");
    if (predictions.outputs.rows() != n)
        throw InvalidInputError("audit: one prediction row per individual required");
    if (metric.rows() != metric.cols() || metric.rows() != features.cols())
        throw InvalidInputError("audit: metric dimension does not match features");
    if (pair_cap < 1) throw ConfigError("audit: pair cap must be positive");

    AuditReport report;
    std::vector<double> ratios;
    auto evaluate = [&](Index i, Index j) {
        ++report.pairs_evaluated;
        const double d = static_cast<double>(mahalanobis(features, metric, i, j));
        const double out = predictions.distance(i, j);
        if (d == 0.0) {
            if (out == 0.0) {
                ++report.pairs_skipped_zero;
            } else {
                report.infinite = true;
                ++report.zero_distance_violations;
            }
            return;
        }
        ratios.push_back(out / d);
    };

    const double total_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    if (total_pairs <= static_cast<double>(pair_cap)) {
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j) evaluate(i, j);
    } else {
        const std::uint64_t key = rng::stream_key(seed, rng::Stage::PairSample);
        const std::uint64_t count = static_cast<std::uint64_t>(n);
        for (Index draw = 0; draw < pair_cap; ++draw) {
            // Two distinct indices from one stream position.
            const std::uint64_t bits = rng::at(key, static_cast<std::uint64_t>(draw));
            const Index i = static_cast<Index>(bits % count);
            Index j = static_cast<Index>(rng::mix64(bits) % (count - 1));
            if (j >= i) ++j;
            evaluate(std::min(i, j), std::max(i, j));
        }
    }

    report.finite_ratios = static_cast<Index>(ratios.size());
    if (!ratios.empty()) {
        std::sort(ratios.begin(), ratios.end());
        auto quantile = [&](double q) {
            const std::size_t rank = static_cast<std::size_t>(
                std::ceil(q * static_cast<double>(ratios.size())) - 1.0);
            return ratios[std::min(rank, ratios.size() - 1)];
        };
        report.q50 = quantile(0.50);
        report.q90 = quantile(0.90);
        report.q99 = quantile(0.99);
        report.l_max = ratios.back();
    }
    return report;
}

/// Fairness constant carried over to the true metric: l * (1 + sqrt(eps /
/// sigma_min)), where eps bounds the spectral gap between the metrics and
/// sigma_min is the smallest nonzero eigenvalue of the true metric.
inline double transfer_bound(double l, double metric_gap_eps, double sigma_min_true) {
    if (l < 0.0) throw InvalidInputError("transfer_bound: Lipschitz constant must be >= 0");
    if (metric_gap_eps < 0.0) throw InvalidInputError("transfer_bound: metric gap must be >= 0");
    if (!(sigma_min_true > 0.0))
        throw InvalidInputError(
            "transfer_bound: the bound needs the true metric to be positive definite on its "
            "range; pass its smallest nonzero eigenvalue");
    return l * (1.0 + std::sqrt(metric_gap_eps / sigma_min_true));
}

/// Outcome of auditing a predictor against both metrics and checking the
/// transfer bound on this instance.
struct CertificationRecord {
    AuditReport audit_estimated;
    AuditReport audit_true;
    double l_hat = 0.0;      ///< Lipschitz constant against the estimated metric
    double l_star = 0.0;     ///< Lipschitz constant against the true metric
    double epsilon = 0.0;    ///< spectral gap between the metrics
    double sigma_min = 0.0;  ///< smallest nonzero eigenvalue of the true metric
    double bound = std::numeric_limits<double>::infinity();
    bool holds = false;      ///< l_star <= bound with both sides finite
};

/// Audits against the estimated metric, evaluates the transfer bound with
/// the measured constant, audits against the true metric, and reports
/// whether the bound held.
template <typename DerivedX, typename DerivedE, typename DerivedT>
CertificationRecord certify_transfer(const PredictionSet& predictions,
                                     const Eigen::MatrixBase<DerivedX>& features,
                                     const Eigen::MatrixBase<DerivedE>& est_metric,
                                     const Eigen::MatrixBase<DerivedT>& true_metric,
                                     Index pair_cap = 2000000, std::uint64_t seed = 0) {
    CertificationRecord record;
    record.audit_estimated = audit(predictions, features, est_metric, pair_cap, seed);
    record.audit_true = audit(predictions, features, true_metric, pair_cap, seed);
    record.epsilon = static_cast<double>(metric_gap(est_metric, true_metric));
    record.sigma_min = static_cast<double>(smallest_nonzero_eigenvalue(true_metric));
    record.l_hat = record.audit_estimated.l_max;
    record.l_star = record.audit_true.l_max;
    if (!record.audit_estimated.infinite) {
        record.bound = transfer_bound(record.l_hat, record.epsilon, record.sigma_min);
        record.holds = !record.audit_true.infinite && record.l_star <= record.bound;
    }
    return record;
}

} // namespace tripletmetric
