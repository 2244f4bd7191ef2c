#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "test_support.hpp"
#include "tripletmetric/core.hpp"
#include "tripletmetric/fairness.hpp"
#include "tripletmetric/simulate.hpp"

using namespace tripletmetric;
using testsupport::TestRng;

TEST_CASE("lipschitz audit") {
    TestRng rng(61);
    const Eigen::MatrixXd x = rng.gaussian(20, 4);
    const Eigen::MatrixXd metric = rng.psd(4);

    SUBCASE("constant predictions have zero constant") {
        PredictionSet predictions;
        predictions.outputs = Eigen::MatrixXd::Ones(20, 2);
        const AuditReport report = audit(predictions, x, metric);
        CHECK(report.l_max == 0.0);
        CHECK(!report.infinite);
        CHECK(report.pairs_evaluated == 190);
    }
    SUBCASE("the embedding predictor is an isometry") {
        const auto [k, factor] = gen_metric(4, 2, 5);
        const PredictionSet predictions = embedding_predictions(x, factor);
        const AuditReport report = audit(predictions, x, k);
        CHECK(report.l_max == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(report.q50 == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("duplicated individuals with differing outputs set the infinite flag") {
        Eigen::MatrixXd dup = x;
        dup.row(1) = dup.row(0);
        PredictionSet predictions;
        predictions.outputs = rng.gaussian(20, 1);
        predictions.outcome_metric = OutcomeMetric::AbsoluteDifference;
        const AuditReport report = audit(predictions, dup, metric);
        CHECK(report.infinite);
        CHECK(report.zero_distance_violations >= 1);
    }
    SUBCASE("agreeing outputs on duplicated individuals are skipped") {
        Eigen::MatrixXd dup = x;
        dup.row(1) = dup.row(0);
        PredictionSet predictions;
        predictions.outputs = dup * rng.gaussian(4, 2);
        const AuditReport report = audit(predictions, dup, metric);
        CHECK(!report.infinite);
        CHECK(report.pairs_skipped_zero == 1);
    }
    SUBCASE("metric scaling rescales the ratios") {
        PredictionSet predictions;
        predictions.outputs = rng.gaussian(20, 3);
        const double c = 3.0;
        const AuditReport base = audit(predictions, x, metric);
        const AuditReport scaled = audit(predictions, x, (c * c) * metric);
        CHECK(scaled.l_max == doctest::Approx(base.l_max / c).epsilon(1e-10));
        CHECK(scaled.q90 == doctest::Approx(base.q90 / c).epsilon(1e-10));
    }
    SUBCASE("pair sampling is deterministic in the seed") {
        PredictionSet predictions;
        predictions.outputs = rng.gaussian(20, 2);
        const AuditReport a = audit(predictions, x, metric, 50, 7);
        const AuditReport b = audit(predictions, x, metric, 50, 7);
        CHECK(a.pairs_evaluated == 50);
        CHECK(a.l_max == b.l_max);
        CHECK(a.q50 == b.q50);
        CHECK(a.q99 == b.q99);
        const AuditReport c = audit(predictions, x, metric, 50, 8);
        CHECK(a.l_max != c.l_max);  // different sample, overwhelmingly likely
    }
    SUBCASE("quantiles never exceed the maximum") {
        PredictionSet predictions;
        predictions.outputs = rng.gaussian(20, 2);
        const AuditReport report = audit(predictions, x, metric);
        CHECK(report.q50 <= report.q90);
        CHECK(report.q90 <= report.q99);
        CHECK(report.q99 <= report.l_max);
    }
    SUBCASE("tiny inputs are rejected") {
        PredictionSet predictions;
        predictions.outputs = Eigen::MatrixXd::Zero(1, 1);
        CHECK_THROWS_AS(audit(predictions, x.topRows(1), metric), InvalidInputError);
    }
}

TEST_CASE("transfer bound") {
    CHECK(transfer_bound(0.7, 0.0, 0.5) == doctest::Approx(0.7));
    CHECK(transfer_bound(0.7, 0.5, 0.5) == doctest::Approx(1.4));
    CHECK(transfer_bound(1.0, 0.04, 1.0) == doctest::Approx(1.2));
    CHECK_THROWS_AS(transfer_bound(1.0, 0.1, 0.0), InvalidInputError);
    CHECK_THROWS_AS(transfer_bound(-1.0, 0.1, 1.0), InvalidInputError);
    CHECK_THROWS_AS(transfer_bound(1.0, -0.1, 1.0), InvalidInputError);
}

TEST_CASE("transfer certification") {
    TestRng rng(67);
    const Eigen::MatrixXd x = rng.gaussian(25, 5);
    const auto [metric, factor] = gen_metric(5, 2, 11);

    SUBCASE("identical metrics certify with equality") {
        const PredictionSet predictions = embedding_predictions(x, factor);
        const CertificationRecord record = certify_transfer(predictions, x, metric, metric);
        CHECK(record.holds);
        CHECK(record.epsilon == 0.0);
        CHECK(record.l_hat == record.l_star);
        CHECK(record.bound == doctest::Approx(record.l_hat));
    }
    SUBCASE("distance-to-anchor predictors are 1-Lipschitz") {
        Eigen::MatrixXd outputs(25, 1);
        for (Index i = 0; i < 25; ++i) outputs(i, 0) = mahalanobis(x, metric, i, 0);
        PredictionSet predictions;
        predictions.outputs = outputs;
        predictions.outcome_metric = OutcomeMetric::AbsoluteDifference;
        const AuditReport report = audit(predictions, x, metric);
        CHECK(report.l_max <= 1.0 + 1e-9);
    }
    SUBCASE("in-range perturbations certify across 20 seeds") {
        for (int seed = 0; seed < 20; ++seed) {
            TestRng local(1000 + seed);
            const Index n = 25, p = 6, r = 2;
            const Eigen::MatrixXd features = local.gaussian(n, p);
            const auto [true_metric, true_factor] = gen_metric(p, r, 2000 + seed);
            // perturb within the range of the true metric, keeping it PSD
            Eigen::MatrixXd wobble = 0.15 * local.gaussian(r, r);
            wobble = ((wobble + wobble.transpose()) / 2.0).eval();
            const double wobble_norm = wobble.operatorNorm();
            if (wobble_norm > 0.5) wobble *= 0.5 / wobble_norm;
            const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(r, r) + wobble;
            const Eigen::MatrixXd perturbed = true_factor * q * true_factor.transpose();
            // a predictor that is Lipschitz for the perturbed metric by construction
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(perturbed);
            const Eigen::MatrixXd root =
                es.eigenvectors() *
                es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                es.eigenvectors().transpose();
            Eigen::MatrixXd mixer = local.gaussian(p, p);
            mixer *= 0.8 / mixer.operatorNorm();
            PredictionSet predictions;
            predictions.outputs = features * root * mixer;
            const CertificationRecord record =
                certify_transfer(predictions, features, perturbed, true_metric);
            CHECK(record.holds);
            CHECK(record.l_star <= record.bound + 1e-12);
        }
    }
}
