#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tripletmetric/core.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

/// Settings for the gradient-descent loop.
struct TrainConfig {
    double eta = 0.1;        ///< constant step size
    Index iterations = 200;  ///< number of full-batch steps
    Index record_every = 1;  ///< trace recording stride
    std::optional<Eigen::MatrixXd> reference_factor;  ///< ground truth for diagnostics
    std::optional<double> grad_norm_stop;  ///< optional early stop on the gradient norm
    Index threads = 1;       ///< worker count for the triplet reduction

    void validate() const {
        if (!(eta > 0.0)) throw ConfigError("step size must be positive");
        if (iterations < 1) throw ConfigError("iteration count must be at least 1");
        if (record_every < 1) throw ConfigError("record stride must be at least 1");
        if (threads < 1) throw ConfigError("thread count must be at least 1");
        if (grad_norm_stop.has_value() && !(*grad_norm_stop > 0.0))
            throw ConfigError("gradient-norm stop threshold must be positive");
    }
};

/// One recorded point of a training run.
struct TraceSample {
    Index iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::optional<double> aligned_error;
    double wallclock_ms = 0.0;
};

/// Per-iteration diagnostics of a training run.
struct TrainTrace {
    std::vector<TraceSample> samples;
};

/// Training aborted on a non-finite loss or gradient; carries the trace
/// recorded up to that point.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& message, TrainTrace partial)
        : NumericalError(message), trace(std::move(partial)) {}

    TrainTrace trace;
};

namespace detail {

/// sigma(-y m) = 1 / (exp(y m) + 1), evaluated without overflow.
inline double flipped_sigmoid(double ym) {
    if (ym >= 0.0) {
        const double e = std::exp(-ym);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(ym));
}

/// log(1 + exp(z)) without overflow for large |z|.
inline double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

/// Runs fn(begin, end) over `chunks` contiguous slices of [0, total).
/// Slice boundaries depend only on the chunk count, so results that are
/// combined in slice order are reproducible for a fixed thread count.
template <typename Fn>
void run_chunked(std::size_t total, Index chunks, Fn&& fn) {
    const std::size_t parts = static_cast<std::size_t>(std::max<Index>(chunks, 1));
    if (parts <= 1 || total < 2 * parts) {
        fn(0, std::size_t(0), total);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(parts);
    const std::size_t stride = (total + parts - 1) / parts;
    for (std::size_t c = 0; c < parts; ++c) {
        const std::size_t begin = c * stride;
        const std::size_t end = std::min(total, begin + stride);
        if (begin >= end) break;
        workers.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
    }
    for (std::thread& w : workers) w.join();
}

} // namespace detail

/// Mean logistic loss of the batch under the factor A:
///   L(A) = (1/|S|) sum_t log(1 + exp(-y_t * margin_t)).
/// Margins are computed through the embedded points X A in O(r) per triplet.
template <typename DerivedX, typename DerivedA>
double loss(const TripletBatch& batch, const Eigen::MatrixBase<DerivedX>& features,
            const Eigen::MatrixBase<DerivedA>& factor, Index threads = 1) {
    if (batch.empty()) throw InvalidInputError("loss: batch is empty");
    if (factor.rows() != features.cols())
        throw InvalidInputError("loss: factor rows do not match feature count");
    if (batch.n != features.rows())
        throw InvalidInputError("loss: batch and features disagree on n");

    const Eigen::MatrixXd embedded = (features * factor).template cast<double>();
    const std::size_t total = batch.responses.size();
    std::vector<long double> partials(static_cast<std::size_t>(std::max<Index>(threads, 1)), 0.0L);
    detail::run_chunked(total, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        long double acc = 0.0L;
        for (std::size_t idx = begin; idx < end; ++idx) {
            const TripletResponse& r = batch.responses[idx];
            const double margin = (embedded.row(r.t.i) - embedded.row(r.t.j)).squaredNorm() -
                                  (embedded.row(r.t.i) - embedded.row(r.t.k)).squaredNorm();
            acc += detail::softplus(-static_cast<double>(r.y) * margin);
        }
        partials[chunk] = acc;
    });
    long double sum = 0.0L;
    for (long double part : partials) sum += part;
    return static_cast<double>(sum / static_cast<long double>(total));
}

/// Loss and analytic gradient in one pass over the batch. The gradient
///   grad L(A) = -(1/|S|) sum_t 2 y_t M_t A / (exp(y_t margin_t) + 1)
/// is assembled as X^T C from per-individual coefficient rows, so the sweep
/// costs O(r) per triplet plus one p-by-n times n-by-r product.
template <typename DerivedX, typename DerivedA>
std::pair<double, Eigen::MatrixXd> loss_and_gradient(const TripletBatch& batch,
                                                     const Eigen::MatrixBase<DerivedX>& features,
                                                     const Eigen::MatrixBase<DerivedA>& factor,
                                                     Index threads = 1) {
    if (batch.empty()) throw InvalidInputError("loss_and_gradient: batch is empty");
    if (factor.rows() != features.cols())
        throw InvalidInputError("loss_and_gradient: factor rows do not match feature count");
    if (batch.n != features.rows())
        throw InvalidInputError("loss_and_gradient: batch and features disagree on n");

    const Index n = features.rows();
    const Index r = factor.cols();
    const Eigen::MatrixXd embedded = (features * factor).template cast<double>();
    const std::size_t total = batch.responses.size();

    const std::size_t parts = static_cast<std::size_t>(std::max<Index>(threads, 1));
    std::vector<long double> loss_partials(parts, 0.0L);
    std::vector<Eigen::MatrixXd> coeff_partials(parts);
    detail::run_chunked(total, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        long double acc = 0.0L;
        Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(n, r);
        for (std::size_t idx = begin; idx < end; ++idx) {
            const TripletResponse& resp = batch.responses[idx];
            const Index i = resp.t.i, j = resp.t.j, k = resp.t.k;
            const auto yi = embedded.row(i);
            const auto yj = embedded.row(j);
            const auto yk = embedded.row(k);
            const double margin = (yi - yj).squaredNorm() - (yi - yk).squaredNorm();
            const double ym = static_cast<double>(resp.y) * margin;
            acc += detail::softplus(-ym);
            const double weight = 2.0 * static_cast<double>(resp.y) * detail::flipped_sigmoid(ym);
            coeff.row(i) += weight * (yk - yj);
            coeff.row(j) += weight * (yj - yi);
            coeff.row(k) += weight * (yi - yk);
        }
        loss_partials[chunk] = acc;
        coeff_partials[chunk] = std::move(coeff);
    });

    Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(n, r);
    long double loss_sum = 0.0L;
    for (std::size_t c = 0; c < parts; ++c) {
        loss_sum += loss_partials[c];
        if (coeff_partials[c].size() > 0) coeff += coeff_partials[c];
    }
    const double inv = 1.0 / static_cast<double>(total);
    Eigen::MatrixXd grad = -(features.transpose().template cast<double>() * coeff) * inv;
    return {static_cast<double>(loss_sum / static_cast<long double>(total)), std::move(grad)};
}

/// Analytic gradient of the loss; see loss_and_gradient.
template <typename DerivedX, typename DerivedA>
Eigen::MatrixXd gradient(const TripletBatch& batch, const Eigen::MatrixBase<DerivedX>& features,
                         const Eigen::MatrixBase<DerivedA>& factor, Index threads = 1) {
    return loss_and_gradient(batch, features, factor, threads).second;
}

/// Quadratic form vec(V)^T hess L(A) vec(V) evaluated from the two-term
/// analytic Hessian, without materializing the pr-by-pr matrix:
/// per triplet, -2 y sigma(-y m) trace(V^T M_t V) plus
/// 4 sigma(-y m)(1 - sigma(-y m)) <M_t A, V>^2.
template <typename DerivedX, typename DerivedA, typename DerivedV>
double hessian_quadratic_form(const TripletBatch& batch,
                              const Eigen::MatrixBase<DerivedX>& features,
                              const Eigen::MatrixBase<DerivedA>& factor,
                              const Eigen::MatrixBase<DerivedV>& direction, Index threads = 1) {
    if (batch.empty()) throw InvalidInputError("hessian_quadratic_form: batch is empty");
    detail::require_same_shape(factor, direction, "hessian_quadratic_form");
    if (factor.rows() != features.cols())
        throw InvalidInputError("hessian_quadratic_form: factor rows do not match feature count");
    if (batch.n != features.rows())
        throw InvalidInputError("hessian_quadratic_form: batch and features disagree on n");

    const Eigen::MatrixXd embedded = (features * factor).template cast<double>();
    const Eigen::MatrixXd probed = (features * direction).template cast<double>();
    const std::size_t total = batch.responses.size();
    std::vector<long double> partials(static_cast<std::size_t>(std::max<Index>(threads, 1)), 0.0L);
    detail::run_chunked(total, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        long double acc = 0.0L;
        for (std::size_t idx = begin; idx < end; ++idx) {
            const TripletResponse& resp = batch.responses[idx];
            const Index i = resp.t.i, j = resp.t.j, k = resp.t.k;
            const auto yi = embedded.row(i);
            const auto yj = embedded.row(j);
            const auto yk = embedded.row(k);
            const auto wi = probed.row(i);
            const auto wj = probed.row(j);
            const auto wk = probed.row(k);
            const double margin = (yi - yj).squaredNorm() - (yi - yk).squaredNorm();
            const double ym = static_cast<double>(resp.y) * margin;
            const double s = detail::flipped_sigmoid(ym);
            const double curvature_v = (wi - wj).squaredNorm() - (wi - wk).squaredNorm();
            const double inner = yk.dot(wi) + yi.dot(wk) - yj.dot(wi) - yi.dot(wj) +
                                 yj.dot(wj) - yk.dot(wk);
            acc += -2.0 * static_cast<double>(resp.y) * s * curvature_v +
                   4.0 * s * (1.0 - s) * inner * inner;
        }
        partials[chunk] = acc;
    });
    long double sum = 0.0L;
    for (long double part : partials) sum += part;
    return static_cast<double>(sum / static_cast<long double>(total));
}

/// Runs exactly `config.iterations` full-batch gradient steps from `init`.
/// The trace records loss, gradient norm, and (when a reference factor is
/// configured) the Procrustes-aligned error, every `record_every` iterations
/// and at the final iterate. Any non-finite loss or gradient aborts with a
/// DivergenceError that carries the partial trace.
template <typename DerivedX, typename DerivedA>
std::pair<Eigen::MatrixXd, TrainTrace> train(const TripletBatch& batch,
                                             const Eigen::MatrixBase<DerivedX>& features,
                                             const Eigen::MatrixBase<DerivedA>& init,
                                             const TrainConfig& config) {
    config.validate();
    validate_features(features);
    validate_factor(init);
    if (init.rows() != features.cols())
        throw InvalidInputError("train: init factor rows do not match feature count");
    if (config.reference_factor.has_value() &&
        (config.reference_factor->rows() != init.rows() ||
         config.reference_factor->cols() != init.cols()))
        throw InvalidInputError("train: reference factor shape does not match init");

    const auto start = std::chrono::steady_clock::now();
    TrainTrace trace;
    auto record = [&](Index iter, double loss_value, const Eigen::MatrixXd& grad,
                      const Eigen::MatrixXd& factor) {
        TraceSample sample;
        sample.iter = iter;
        sample.loss = loss_value;
        sample.grad_norm = grad.norm();
        if (config.reference_factor.has_value())
            sample.aligned_error =
                static_cast<double>(aligned_error(factor, *config.reference_factor));
        sample.wallclock_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
        trace.samples.push_back(std::move(sample));
    };

    Eigen::MatrixXd factor = init.template cast<double>();
    Index completed = 0;
    for (Index iter = 0; iter < config.iterations; ++iter) {
        auto [loss_value, grad] = loss_and_gradient(batch, features, factor, config.threads);
        if (!std::isfinite(loss_value) || !grad.allFinite())
            throw DivergenceError("train: non-finite loss or gradient at iteration " +
                                      std::to_string(iter),
                                  std::move(trace));
        if (config.grad_norm_stop.has_value() && grad.norm() < *config.grad_norm_stop) break;
        if (iter % config.record_every == 0) record(iter, loss_value, grad, factor);
        factor -= config.eta * grad;
        completed = iter + 1;
    }
    auto [final_loss, final_grad] = loss_and_gradient(batch, features, factor, config.threads);
    if (!std::isfinite(final_loss) || !final_grad.allFinite())
        throw DivergenceError("train: non-finite loss or gradient at the final iterate",
                              std::move(trace));
    if (trace.samples.empty() || trace.samples.back().iter < completed)
        record(completed, final_loss, final_grad, factor);
    return {std::move(factor), std::move(trace)};
}

} // namespace tripletmetric
