#include <doctest.h>

#include <Eigen/Dense>

#include "test_support.hpp"
#include "tripletmetric/core.hpp"
#include "tripletmetric/error.hpp"

using namespace tripletmetric;
using testsupport::TestRng;

TEST_CASE("mahalanobis squared distance") {
    Eigen::MatrixXd features(3, 2);
    features << 1, 0, 0, 1, 1, 0;
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(2, 2);

    SUBCASE("zero for identical indices") {
        CHECK(mahalanobis_sq(features, identity, 1, 1) == 0.0);
    }
    SUBCASE("scalar instance") {
        Eigen::MatrixXd x(3, 1);
        x << 0, 1, 2;
        Eigen::MatrixXd k(1, 1);
        k << 1;
        CHECK(mahalanobis_sq(x, k, 0, 1) == doctest::Approx(1.0));
    }
    SUBCASE("unit vectors under the identity") {
        CHECK(mahalanobis_sq(features, identity, 0, 1) == doctest::Approx(2.0));
    }
    SUBCASE("symmetric in the pair") {
        TestRng rng(5);
        const Eigen::MatrixXd x = rng.gaussian(6, 4);
        const Eigen::MatrixXd k = rng.psd(4);
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 6; ++j)
                CHECK(mahalanobis_sq(x, k, i, j) == mahalanobis_sq(x, k, j, i));
    }
    SUBCASE("dimension mismatch raises") {
        CHECK_THROWS_AS(mahalanobis_sq(features, Eigen::MatrixXd::Identity(3, 3), 0, 1),
                        InvalidInputError);
        CHECK_THROWS_AS(mahalanobis_sq(features, identity, 0, 3), InvalidInputError);
    }
    SUBCASE("works for float") {
        Eigen::MatrixXf xf = features.cast<float>();
        Eigen::MatrixXf kf = identity.cast<float>();
        CHECK(mahalanobis_sq(xf, kf, 0, 1) == doctest::Approx(2.0f));
    }
}

TEST_CASE("comparison matrix") {
    SUBCASE("coincident second and third points cancel") {
        Eigen::MatrixXd x(3, 2);
        x << 1, 2, 3, -1, 3, -1;
        const Eigen::MatrixXd m = comparison_matrix(x, {0, 1, 2});
        CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("scalar instance") {
        Eigen::MatrixXd x(3, 1);
        x << 0, 1, 2;
        const Eigen::MatrixXd m = comparison_matrix(x, {0, 1, 2});
        CHECK(m(0, 0) == doctest::Approx(-3.0));
    }
    SUBCASE("trace identity against distances") {
        TestRng rng(7);
        for (int inst = 0; inst < 30; ++inst) {
            const Index n = 4 + rng.below(6);
            const Index p = 1 + rng.below(5);
            const Eigen::MatrixXd x = rng.gaussian(n, p);
            const Eigen::MatrixXd k = rng.psd(p);
            const Triplet t = rng.triplet(n);
            const Eigen::MatrixXd m = comparison_matrix(x, t);
            CHECK(m.isApprox(m.transpose(), 1e-12));
            const double lhs = (m * k).trace();
            const double rhs =
                mahalanobis_sq(x, k, t.i, t.j) - mahalanobis_sq(x, k, t.i, t.k);
            CHECK(testsupport::rel_error(lhs, rhs) < 1e-12);
        }
    }
}

TEST_CASE("triplet margin") {
    SUBCASE("factored and trace forms agree") {
        TestRng rng(11);
        for (int inst = 0; inst < 200; ++inst) {
            const Index n = 4 + rng.below(8);
            const Index p = 1 + rng.below(8);
            const Index r = 1 + rng.below(p);
            const Eigen::MatrixXd x = rng.gaussian(n, p);
            const Eigen::MatrixXd a = rng.gaussian(p, r);
            const Triplet t = rng.triplet(n);
            const double margin = triplet_margin(x, a, t);
            const double oracle = testsupport::margin_by_trace(x, a, t);
            CHECK(testsupport::rel_error(margin, oracle) < 1e-10);
        }
    }
    SUBCASE("scalar instance") {
        Eigen::MatrixXd x(3, 1);
        x << 0, 1, 2;
        Eigen::MatrixXd a(1, 1);
        a << 1;
        CHECK(triplet_margin(x, a, {0, 1, 2}) == doctest::Approx(-3.0));
    }
    SUBCASE("zero factor gives zero margin") {
        TestRng rng(13);
        const Eigen::MatrixXd x = rng.gaussian(5, 3);
        const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 2);
        CHECK(triplet_margin(x, a, {0, 1, 2}) == 0.0);
    }
    SUBCASE("coincident pair gives zero margin") {
        Eigen::MatrixXd x(3, 2);
        x << 1, 2, 3, -1, 3, -1;
        Eigen::MatrixXd a(2, 1);
        a << 0.3, -0.8;
        CHECK(triplet_margin(x, a, {0, 1, 2}) == 0.0);
    }
}

TEST_CASE("procrustes alignment") {
    TestRng rng(17);
    SUBCASE("identical factors align at zero error") {
        const Eigen::MatrixXd a = rng.gaussian(5, 3);
        const auto result = procrustes_align(a, a);
        CHECK(result.aligned_error < 1e-10);
        CHECK((result.rotation - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10);
    }
    SUBCASE("undoes an orthogonal rotation") {
        const Eigen::MatrixXd a = rng.gaussian(6, 3);
        const Eigen::MatrixXd q = rng.orthogonal(3);
        const auto result = procrustes_align(a * q, a);
        CHECK(result.aligned_error < 1e-10);
        CHECK((result.rotation - q.transpose()).norm() < 1e-8);
    }
    SUBCASE("rotation is orthogonal") {
        const Eigen::MatrixXd z = rng.gaussian(4, 2);
        const Eigen::MatrixXd a = rng.gaussian(4, 2);
        const auto result = procrustes_align(z, a);
        const Eigen::MatrixXd gram = result.rotation.transpose() * result.rotation;
        CHECK((gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("beats 1000 random rotations") {
        const Eigen::MatrixXd z = rng.gaussian(4, 2);
        const Eigen::MatrixXd a = rng.gaussian(4, 2);
        const auto result = procrustes_align(z, a);
        CHECK(result.aligned_error <= (z - a).norm() + 1e-12);
        for (int trial = 0; trial < 1000; ++trial) {
            const Eigen::MatrixXd q = rng.orthogonal(2);
            CHECK(result.aligned_error <= (z * q - a).norm() + 1e-12);
        }
    }
    SUBCASE("shape mismatch raises") {
        CHECK_THROWS_AS(procrustes_align(rng.gaussian(4, 2), rng.gaussian(4, 3)),
                        InvalidInputError);
    }
}

TEST_CASE("metric gap") {
    TestRng rng(23);
    SUBCASE("zero for identical metrics") {
        const Eigen::MatrixXd k = rng.psd(4);
        CHECK(metric_gap(k, k) == 0.0);
    }
    SUBCASE("scaled identities") {
        const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
        CHECK(metric_gap(2.0 * eye, eye) == doctest::Approx(1.0));
    }
    SUBCASE("matches the power-iteration oracle") {
        for (int inst = 0; inst < 10; ++inst) {
            const Index p = 2 + rng.below(6);
            const Eigen::MatrixXd a = rng.psd(p);
            const Eigen::MatrixXd b = rng.psd(p);
            const double gap = metric_gap(a, b);
            const double oracle = testsupport::power_iteration_norm(a - b);
            CHECK(std::abs(gap - oracle) < 1e-8 * std::max(1.0, gap));
        }
    }
    SUBCASE("frobenius variant dominates the spectral gap") {
        const Eigen::MatrixXd a = rng.psd(5);
        const Eigen::MatrixXd b = rng.psd(5);
        CHECK(metric_gap_frobenius(a, b) >= metric_gap(a, b) - 1e-12);
    }
    SUBCASE("dimension mismatch raises") {
        CHECK_THROWS_AS(metric_gap(rng.psd(3), rng.psd(4)), InvalidInputError);
    }
}

TEST_CASE("metric validation") {
    SUBCASE("accepts a PSD matrix") {
        TestRng rng(29);
        CHECK_NOTHROW(validate_metric(rng.psd(5)));
    }
    SUBCASE("rejects a matrix with eigenvalue -1e-3") {
        Eigen::MatrixXd k = Eigen::MatrixXd::Identity(3, 3);
        k(2, 2) = -1e-3;
        CHECK_THROWS_AS(validate_metric(k), InvalidInputError);
    }
    SUBCASE("rejects asymmetry") {
        Eigen::MatrixXd k = Eigen::MatrixXd::Identity(3, 3);
        k(0, 1) = 0.5;
        CHECK_THROWS_AS(validate_metric(k), InvalidInputError);
    }
    SUBCASE("tolerates tiny negative eigenvalues") {
        Eigen::MatrixXd k = Eigen::MatrixXd::Identity(3, 3);
        k(2, 2) = -1e-12;
        CHECK_NOTHROW(validate_metric(k));
    }
}

TEST_CASE("smallest nonzero eigenvalue") {
    TestRng rng(31);
    SUBCASE("rank-deficient metric") {
        const Eigen::MatrixXd a = rng.gaussian(6, 2);
        const Eigen::MatrixXd k = a * a.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
        // the two nonzero eigenvalues sit at the top of the ascending list
        const double expected = es.eigenvalues()(4);
        CHECK(smallest_nonzero_eigenvalue(k) == doctest::Approx(expected).epsilon(1e-10));
    }
    SUBCASE("zero matrix raises") {
        CHECK_THROWS_AS(smallest_nonzero_eigenvalue(Eigen::MatrixXd::Zero(3, 3)),
                        NumericalError);
    }
}

TEST_CASE("triplet and batch validation") {
    CHECK_THROWS_AS(Triplet({0, 0, 1}).validate(3), InvalidInputError);
    CHECK_THROWS_AS(Triplet({0, 1, 3}).validate(3), InvalidInputError);
    CHECK_NOTHROW(Triplet({0, 1, 2}).validate(3));

    TripletBatch batch;
    batch.n = 4;
    batch.responses = {{{0, 1, 2}, 1}, {{0, 2, 1}, -1}};
    CHECK_NOTHROW(batch.validate());

    batch.responses.push_back({{0, 1, 2}, -1});
    CHECK_THROWS_AS(batch.validate(), InvalidInputError);  // duplicate ordered triple

    batch.responses = {{{0, 1, 2}, 2}};
    CHECK_THROWS_AS(batch.validate(), InvalidInputError);
}
