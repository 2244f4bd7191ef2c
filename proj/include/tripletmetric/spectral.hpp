#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tripletmetric/core.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

/// Result of discarding the largest-norm individuals: the retained rows and
/// the map from retained index to original index.
struct NormFilterResult {
    Eigen::MatrixXd features;       ///< retained rows, original order preserved
    std::vector<Index> index_map;   ///< retained index -> original index
};

/// Keeps the n' = n - ceil(discard_fraction * n) individuals of smallest
/// Euclidean norm. Ties are broken by discarding the higher original index.
template <typename Derived>
NormFilterResult filter_by_norm(const Eigen::MatrixBase<Derived>& features,
                                double discard_fraction) {
    if (!(discard_fraction >= 0.0 && discard_fraction < 1.0))
        throw ConfigError("discard fraction must lie in [0, 1), got " +
                          std::to_string(discard_fraction));
    const Index n = features.rows();
    // The small epsilon keeps ceil() from rounding up exact products such as
    // 0.1 * 120 that land just above an integer in floating point.
    const Index discard =
        static_cast<Index>(std::ceil(discard_fraction * static_cast<double>(n) - 1e-9));
    const Index retained = n - discard;
    if (retained < 3)
        throw InsufficientDataError("norm filter would leave " + std::to_string(retained) +
                                    " individuals; at least 3 are required");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    Eigen::VectorXd norms(n);
    for (Index i = 0; i < n; ++i) norms(i) = features.row(i).norm();
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return norms(a) < norms(b); });
    order.resize(static_cast<std::size_t>(retained));
    std::sort(order.begin(), order.end());

    NormFilterResult result;
    result.index_map = std::move(order);
    result.features.resize(retained, features.cols());
    for (Index i = 0; i < retained; ++i)
        result.features.row(i) = features.row(result.index_map[static_cast<std::size_t>(i)]);
    return result;
}

/// Subtracts each column's mean; idempotent.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> center_columns(const Eigen::MatrixBase<Derived>& features) {
    DenseMatrix<typename Derived::Scalar> centered = features;
    centered.rowwise() -= features.colwise().mean();
    return centered;
}

/// Pairwise comparisons induced on the items {j != anchor} by all observed
/// triplets whose first element is the anchor. wins(j, k) counts how often j
/// beat k; counts are real-valued so exact expected-win tournaments can be
/// represented as well.
struct AnchorTournament {
    Index anchor = 0;      ///< retained-space index of the anchor
    Index n_items = 0;     ///< size of the retained set (items are all != anchor)
    Eigen::MatrixXd wins;  ///< n_items x n_items; anchor row/column unused

    double total(Index j, Index k) const { return wins(j, k) + wins(k, j); }
};

/// Builds the anchor tournament from a batch expressed in original indices.
/// `anchor` is a retained-space index; `index_map` maps retained to original
/// indices. A response y = +1 on (anchor, j, k) is a win for j (evidence that
/// d(anchor, j) exceeds d(anchor, k)); y = -1 is a win for k. Triplets that
/// touch discarded individuals are ignored.
inline AnchorTournament build_tournament(const TripletBatch& batch, Index anchor,
                                         const std::vector<Index>& index_map) {
    const Index retained = static_cast<Index>(index_map.size());
    if (anchor < 0 || anchor >= retained)
        throw InvalidInputError("build_tournament: anchor is not a retained index");
    std::vector<Index> inverse(static_cast<std::size_t>(batch.n), Index(-1));
    for (Index r = 0; r < retained; ++r) {
        const Index orig = index_map[static_cast<std::size_t>(r)];
        if (orig < 0 || orig >= batch.n)
            throw InvalidInputError("build_tournament: index map entry out of range");
        inverse[static_cast<std::size_t>(orig)] = r;
    }

    AnchorTournament tournament;
    tournament.anchor = anchor;
    tournament.n_items = retained;
    tournament.wins = Eigen::MatrixXd::Zero(retained, retained);
    for (const TripletResponse& response : batch.responses) {
        const Index i = inverse[static_cast<std::size_t>(response.t.i)];
        if (i != anchor) continue;
        const Index j = inverse[static_cast<std::size_t>(response.t.j)];
        const Index k = inverse[static_cast<std::size_t>(response.t.k)];
        if (j < 0 || k < 0) continue;
        if (response.y > 0)
            tournament.wins(j, k) += 1.0;
        else
            tournament.wins(k, j) += 1.0;
    }
    return tournament;
}

/// Normalized stationary scores of one anchor's comparison chain.
struct ScoreVector {
    Eigen::VectorXd pi;  ///< length n_items - 1, indexed by item slot
    Index anchor = 0;
    Index iterations = 0;

    /// Item slot for retained index j != anchor.
    static Index slot(Index j, Index anchor) { return j < anchor ? j : j - 1; }
    /// Retained index for an item slot.
    static Index unslot(Index s, Index anchor) { return s < anchor ? s : s + 1; }
};

namespace detail {

/// Connected components of the comparison graph over item slots.
inline std::vector<std::vector<Index>> comparison_components(const AnchorTournament& t) {
    const Index items = t.n_items - 1;
    std::vector<Index> component(static_cast<std::size_t>(items), Index(-1));
    std::vector<std::vector<Index>> groups;
    std::vector<Index> stack;
    for (Index s = 0; s < items; ++s) {
        if (component[static_cast<std::size_t>(s)] >= 0) continue;
        const Index id = static_cast<Index>(groups.size());
        groups.emplace_back();
        stack.push_back(s);
        component[static_cast<std::size_t>(s)] = id;
        while (!stack.empty()) {
            const Index cur = stack.back();
            stack.pop_back();
            groups[static_cast<std::size_t>(id)].push_back(cur);
            const Index jcur = ScoreVector::unslot(cur, t.anchor);
            for (Index other = 0; other < items; ++other) {
                if (component[static_cast<std::size_t>(other)] >= 0) continue;
                const Index jother = ScoreVector::unslot(other, t.anchor);
                if (t.total(jcur, jother) > 0.0) {
                    component[static_cast<std::size_t>(other)] = id;
                    stack.push_back(other);
                }
            }
        }
    }
    return groups;
}

inline std::string format_component(const std::vector<Index>& slots, Index anchor) {
    std::ostringstream out;
    out << "{";
    const std::size_t shown = std::min<std::size_t>(slots.size(), 8);
    for (std::size_t idx = 0; idx < shown; ++idx) {
        if (idx > 0) out << ", ";
        out << ScoreVector::unslot(slots[idx], anchor);
    }
    if (slots.size() > shown) out << ", ...";
    out << "}";
    return out.str();
}

} // namespace detail

/// Rank-centrality scores for one anchor: builds the random walk whose
/// transition j -> k is the empirical fraction of comparisons {j, k} won by
/// k, scaled by the reciprocal of the maximum comparison degree, and returns
/// its stationary distribution via power iteration (uniform start, L1
/// stopping rule). Under the response model the stationary mass of item j is
/// proportional to exp(d^2(anchor, j)).
inline ScoreVector rank_centrality(const AnchorTournament& tournament, double tol = 1e-10,
                                   Index max_iters = 100000) {
    const Index items = tournament.n_items - 1;
    if (items < 1) throw InvalidInputError("rank_centrality: tournament has no items");
    if (!(tol > 0.0)) throw ConfigError("rank_centrality: tolerance must be positive");

    const auto components = detail::comparison_components(tournament);
    if (components.size() != 1) {
        const auto smallest = std::min_element(
            components.begin(), components.end(),
            [](const auto& a, const auto& b) { return a.size() < b.size(); });
        throw ConnectivityError(
            "comparison graph for anchor " + std::to_string(tournament.anchor) + " has " +
            std::to_string(components.size()) + " components; smallest is " +
            detail::format_component(*smallest, tournament.anchor) + " (retained indices)");
    }

    // Comparison degree: number of distinct items each item was compared to.
    Eigen::VectorXd degree = Eigen::VectorXd::Zero(items);
    for (Index a = 0; a < items; ++a)
        for (Index b = a + 1; b < items; ++b) {
            const Index ja = ScoreVector::unslot(a, tournament.anchor);
            const Index jb = ScoreVector::unslot(b, tournament.anchor);
            if (tournament.total(ja, jb) > 0.0) {
                degree(a) += 1.0;
                degree(b) += 1.0;
            }
        }
    const double d_max = degree.maxCoeff();

    Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(items, items);
    for (Index a = 0; a < items; ++a) {
        for (Index b = 0; b < items; ++b) {
            if (a == b) continue;
            const Index ja = ScoreVector::unslot(a, tournament.anchor);
            const Index jb = ScoreVector::unslot(b, tournament.anchor);
            const double total = tournament.total(ja, jb);
            if (total > 0.0) transition(a, b) = tournament.wins(jb, ja) / (total * d_max);
        }
        transition(a, a) = 1.0 - transition.row(a).sum();
    }

    ScoreVector scores;
    scores.anchor = tournament.anchor;
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(items, 1.0 / static_cast<double>(items));
    for (Index iter = 1; iter <= max_iters; ++iter) {
        Eigen::VectorXd next = transition.transpose() * pi;
        next /= next.sum();
        const double change = (next - pi).lpNorm<1>();
        pi.swap(next);
        if (change < tol) {
            scores.iterations = iter;
            scores.pi = std::move(pi);
            return scores;
        }
    }
    throw ConvergenceError("rank_centrality did not converge within " +
                           std::to_string(max_iters) + " iterations (anchor " +
                           std::to_string(tournament.anchor) + ")");
}

/// Log-score matrix assembled from the per-anchor scores, with bookkeeping
/// from the assembly step.
struct LogScoreMatrix {
    Eigen::MatrixXd data;                ///< n'-by-n'; diagonal exactly zero
    Index floor_count = 0;               ///< entries clamped at the floor
    std::vector<Index> skipped_anchors;  ///< rows filled with the row mean
};

/// Builds the matrix whose row i holds log pi^i with a zero diagonal.
/// Entries below `pi_floor` are clamped before the log. Rows of anchors
/// without scores are filled with the mean of the completed rows.
inline LogScoreMatrix assemble_log_matrix(const std::vector<std::optional<ScoreVector>>& scores,
                                          Index retained, double pi_floor = 1e-12) {
    if (static_cast<Index>(scores.size()) != retained)
        throw InvalidInputError("assemble_log_matrix: need one score vector slot per anchor");
    if (!(pi_floor > 0.0)) throw ConfigError("assemble_log_matrix: floor must be positive");

    LogScoreMatrix result;
    result.data = Eigen::MatrixXd::Zero(retained, retained);
    std::vector<Index> completed;
    for (Index anchor = 0; anchor < retained; ++anchor) {
        const auto& entry = scores[static_cast<std::size_t>(anchor)];
        if (!entry.has_value()) {
            result.skipped_anchors.push_back(anchor);
            continue;
        }
        if (entry->pi.size() != retained - 1)
            throw InvalidInputError("assemble_log_matrix: score vector has wrong length");
        completed.push_back(anchor);
        for (Index j = 0; j < retained; ++j) {
            if (j == anchor) continue;
            double value = entry->pi(ScoreVector::slot(j, anchor));
            if (value < pi_floor) {
                value = pi_floor;
                ++result.floor_count;
            }
            result.data(anchor, j) = std::log(value);
        }
    }
    if (completed.empty())
        throw InsufficientDataError("assemble_log_matrix: no anchor produced scores");

    if (!result.skipped_anchors.empty()) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(retained);
        for (Index anchor : completed) mean += result.data.row(anchor);
        mean /= static_cast<double>(completed.size());
        for (Index anchor : result.skipped_anchors) {
            result.data.row(anchor) = mean;
            result.data(anchor, anchor) = 0.0;
        }
    }
    return result;
}

/// Double centering: H = -J M J / 2 with J = I - 11^T/n. Row and column sums
/// of the result are zero, which removes per-row additive shifts such as the
/// unknown score normalizers.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> double_center(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    detail::require_square(m, "double_center");
    DenseMatrix<Scalar> centered = m;
    const Scalar grand = m.mean();
    const auto col_means = m.colwise().mean();
    const auto row_means = m.rowwise().mean();
    centered.rowwise() -= col_means;
    centered.colwise() -= row_means;
    centered.array() += grand;
    return Scalar(-0.5) * centered;
}

/// Output of the generalized eigenvector recovery.
struct EigInitResult {
    Eigen::MatrixXd factor;       ///< p-by-r starting factor
    Eigen::MatrixXd basis;        ///< top-r generalized eigenvectors
    Eigen::VectorXd eigenvalues;  ///< all p generalized eigenvalues, nonincreasing
    Index clipped = 0;            ///< how many of the top r were clipped at zero
};

/// Recovers a starting factor from the centered Gram estimate `gram` and the
/// centered retained features: solves the symmetric-definite generalized
/// eigenproblem for (X^T gram X / n'^2, X^T X / n') by Cholesky reduction and
/// returns U_r diag(sqrt(lambda_r)) over the top r eigenpairs, with negative
/// eigenvalues clipped at zero.
template <typename DerivedH, typename DerivedX>
EigInitResult generalized_eig_init(const Eigen::MatrixBase<DerivedH>& gram,
                                   const Eigen::MatrixBase<DerivedX>& features, Index r) {
    const Index n = features.rows();
    const Index p = features.cols();
    detail::require_square(gram, "generalized_eig_init");
    if (gram.rows() != n)
        throw InvalidInputError("generalized_eig_init: gram size does not match individuals");
    if (r < 1 || r > p) throw ConfigError("generalized_eig_init: need 1 <= r <= p");
    if (n <= p)
        throw RankDeficiencyError("generalized_eig_init: needs more individuals than features (" +
                                  std::to_string(n) + " <= " + std::to_string(p) + ")");

    const double scale = static_cast<double>(n);
    const Eigen::MatrixXd m =
        (features.transpose() * gram * features).template cast<double>() / (scale * scale);
    const Eigen::MatrixXd b = (features.transpose() * features).template cast<double>() / scale;
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() != Eigen::Success)
        throw RankDeficiencyError("generalized_eig_init: feature Gram matrix is not positive "
                                  "definite");
    const Eigen::MatrixXd lower = llt.matrixL();
    // C = L^-1 M L^-T, symmetrized against asymmetric noise in the estimate.
    const Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(m);
    Eigen::MatrixXd reduced =
        lower.triangularView<Eigen::Lower>().solve(half.transpose()).transpose();
    reduced = ((reduced + reduced.transpose()) / 2.0).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
    if (es.info() != Eigen::Success)
        throw NumericalError("generalized_eig_init: eigendecomposition failed");

    EigInitResult result;
    result.eigenvalues = es.eigenvalues().reverse();  // nonincreasing
    Eigen::MatrixXd vectors(p, r);
    for (Index c = 0; c < r; ++c) vectors.col(c) = es.eigenvectors().col(p - 1 - c);
    result.basis = lower.transpose().triangularView<Eigen::Upper>().solve(vectors);

    result.factor.resize(p, r);
    for (Index c = 0; c < r; ++c) {
        double lambda = result.eigenvalues(c);
        if (lambda < 0.0) {
            lambda = 0.0;
            ++result.clipped;
        }
        result.factor.col(c) = result.basis.col(c) * std::sqrt(lambda);
    }
    return result;
}

/// Options for the end-to-end initialization.
struct InitOptions {
    double discard_fraction = 0.1;
    double pi_floor = 1e-12;
    double rc_tol = 1e-10;
    Index rc_max_iters = 100000;
    bool symmetrize = false;                  ///< average the log-score matrix with its transpose
    double max_disconnected_fraction = 0.2;   ///< hard failure past this share of skipped anchors
};

/// Diagnostics collected while computing the initialization.
struct InitReport {
    Index n_total = 0;
    Index n_retained = 0;
    std::vector<Index> index_map;        ///< retained -> original indices
    Index floor_count = 0;
    std::vector<Index> rc_iterations;    ///< per retained anchor; 0 when skipped
    std::vector<Index> skipped_anchors;  ///< retained indices without scores
    Eigen::VectorXd eigenvalues;         ///< generalized spectrum, nonincreasing
    Index clipped_eigenvalues = 0;
    std::vector<std::string> warnings;
};

/// Spectral initialization: norm filter, column centering, per-anchor
/// rank-centrality scores, log-score assembly, double centering, and the
/// generalized eigenvector recovery of the starting factor. Only triplets
/// whose three members survive the norm filter contribute. Anchors whose
/// comparison graph is disconnected are skipped and reported; the run fails
/// once more than `max_disconnected_fraction` of the anchors are skipped.
template <typename Derived>
std::pair<Eigen::MatrixXd, InitReport> spectral_init(const TripletBatch& batch,
                                                     const Eigen::MatrixBase<Derived>& features,
                                                     Index r,
                                                     const InitOptions& options = {}) {
    validate_features(features);
    batch.validate();
    if (batch.n != features.rows())
        throw InvalidInputError("spectral_init: batch and features disagree on n");
    if (r < 1 || r > features.cols())
        throw ConfigError("spectral_init: need 1 <= r <= p");

    NormFilterResult filtered = filter_by_norm(features, options.discard_fraction);
    const Index retained = filtered.features.rows();
    const Eigen::MatrixXd centered = center_columns(filtered.features);

    InitReport report;
    report.n_total = features.rows();
    report.n_retained = retained;
    report.index_map = filtered.index_map;
    report.rc_iterations.assign(static_cast<std::size_t>(retained), Index(0));

    // Bucket responses by retained anchor once; each bucket stores the
    // comparison in retained coordinates.
    std::vector<Index> inverse(static_cast<std::size_t>(batch.n), Index(-1));
    for (Index idx = 0; idx < retained; ++idx)
        inverse[static_cast<std::size_t>(filtered.index_map[static_cast<std::size_t>(idx)])] = idx;
    struct Comparison {
        Index winner;
        Index loser;
    };
    std::vector<std::vector<Comparison>> buckets(static_cast<std::size_t>(retained));
    for (const TripletResponse& response : batch.responses) {
        const Index i = inverse[static_cast<std::size_t>(response.t.i)];
        const Index j = inverse[static_cast<std::size_t>(response.t.j)];
        const Index k = inverse[static_cast<std::size_t>(response.t.k)];
        if (i < 0 || j < 0 || k < 0) continue;
        if (response.y > 0)
            buckets[static_cast<std::size_t>(i)].push_back({j, k});
        else
            buckets[static_cast<std::size_t>(i)].push_back({k, j});
    }

    std::vector<std::optional<ScoreVector>> scores(static_cast<std::size_t>(retained));
    for (Index anchor = 0; anchor < retained; ++anchor) {
        AnchorTournament tournament;
        tournament.anchor = anchor;
        tournament.n_items = retained;
        tournament.wins = Eigen::MatrixXd::Zero(retained, retained);
        for (const Comparison& c : buckets[static_cast<std::size_t>(anchor)])
            tournament.wins(c.winner, c.loser) += 1.0;
        try {
            ScoreVector sv = rank_centrality(tournament, options.rc_tol, options.rc_max_iters);
            report.rc_iterations[static_cast<std::size_t>(anchor)] = sv.iterations;
            scores[static_cast<std::size_t>(anchor)] = std::move(sv);
        } catch (const ConnectivityError&) {
            report.skipped_anchors.push_back(anchor);
        }
    }

    const double skipped_fraction =
        static_cast<double>(report.skipped_anchors.size()) / static_cast<double>(retained);
    if (skipped_fraction > options.max_disconnected_fraction)
        throw InitializationError(
            "spectral_init: " + std::to_string(report.skipped_anchors.size()) + " of " +
            std::to_string(retained) + " anchors have disconnected comparison graphs");

    LogScoreMatrix log_matrix = assemble_log_matrix(scores, retained, options.pi_floor);
    report.floor_count = log_matrix.floor_count;
    for (Index anchor : log_matrix.skipped_anchors) {
        bool counted = std::find(report.skipped_anchors.begin(), report.skipped_anchors.end(),
                                 anchor) != report.skipped_anchors.end();
        if (!counted) report.skipped_anchors.push_back(anchor);
    }
    if (!report.skipped_anchors.empty())
        report.warnings.push_back(std::to_string(report.skipped_anchors.size()) +
                                  " anchor rows filled with the mean of completed rows");

    Eigen::MatrixXd assembled = std::move(log_matrix.data);
    if (options.symmetrize) assembled = ((assembled + assembled.transpose()) / 2.0).eval();
    const Eigen::MatrixXd gram = double_center(assembled);

    EigInitResult eig = generalized_eig_init(gram, centered, r);
    report.eigenvalues = std::move(eig.eigenvalues);
    report.clipped_eigenvalues = eig.clipped;
    if (eig.clipped > 0)
        report.warnings.push_back(std::to_string(eig.clipped) +
                                  " of the top eigenvalues were negative and clipped to zero");
    return {std::move(eig.factor), std::move(report)};
}

} // namespace tripletmetric
