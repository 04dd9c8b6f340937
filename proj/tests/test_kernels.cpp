#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nglge/kernels.hpp"
#include "test_util.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

using namespace nglge;
using nglge::testing::Gen;
using Eigen::MatrixXd;

namespace {

// Independent of the BDCSVD path used by the library.
double jacobi_nuclear_norm(const MatrixXd &m) {
    return Eigen::JacobiSVD<MatrixXd>(m).singularValues().sum();
}

double prox_objective(const MatrixXd &b, const MatrixXd &m, double tau) {
    return tau * jacobi_nuclear_norm(b) + 0.5 * (b - m).squaredNorm();
}

} // namespace

TEST_CASE("thin svd contract") {
    Gen gen(1);
    for (auto [rows, cols] : {std::pair{6, 4}, std::pair{4, 6}, std::pair{30, 30}}) {
        const MatrixXd m = gen.gaussian(rows, cols);
        const auto svd = thin_svd(m);
        const auto r = std::min(rows, cols);
        CHECK(svd.left.cols() == r);
        CHECK((svd.left.transpose() * svd.left - MatrixXd::Identity(r, r)).norm() <= 1e-10);
        CHECK((svd.right.transpose() * svd.right - MatrixXd::Identity(r, r)).norm() <= 1e-10);
        CHECK((svd.reconstruct() - m).norm() <= 1e-8 * m.norm());
        for (Eigen::Index i = 1; i < r; ++i)
            CHECK(svd.singulars(i) <= svd.singulars(i - 1));
        CHECK(svd.singulars.minCoeff() >= 0);
        for (Eigen::Index j = 0; j < r; ++j) {
            Eigen::Index at = 0;
            svd.left.col(j).cwiseAbs().maxCoeff(&at);
            CHECK(svd.left(at, j) >= 0);
        }
    }
}

TEST_CASE("thin svd rank cut-off") {
    MatrixXd m = MatrixXd::Zero(4, 4);
    m(0, 0) = 1;
    m(1, 1) = 1e-13;
    m(2, 2) = 1e-11;
    CHECK(thin_svd(m).rank() == 2);
    CHECK(thin_svd(MatrixXd::Zero(3, 3)).rank() == 0);
}

TEST_CASE("svt shrinks a diagonal matrix entrywise") {
    const MatrixXd m = Eigen::Vector3d(3, 1, 0.2).asDiagonal();
    const MatrixXd expected = Eigen::Vector3d(2.5, 0.5, 0).asDiagonal();
    CHECK((svt(m, 0.5) - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("svt with zero threshold is the identity") {
    Gen gen(2);
    const MatrixXd m = gen.gaussian(7, 7);
    CHECK((svt(m, 0.0) - m).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("svt nuclear norm equals the shrunk singular value sum") {
    Gen gen(3);
    const MatrixXd m = gen.gaussian(6, 6);
    const double tau = 0.7;
    const auto sv = Eigen::JacobiSVD<MatrixXd>(m).singularValues();
    const double expected = (sv.array() - tau).cwiseMax(0.0).sum();
    CHECK(jacobi_nuclear_norm(svt(m, tau)) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("svt is the nuclear-norm prox: no sampled perturbation does better") {
    Gen gen(4);
    const double tau = 1.0;
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd m = gen.gaussian(5, 5);
        const MatrixXd b = svt(m, tau);
        const double best = prox_objective(b, m, tau);
        for (int k = 0; k < 1000; ++k) {
            const double scale = std::pow(10.0, gen.uniform(-6, 0));
            const MatrixXd candidate = b + scale * gen.gaussian(5, 5);
            CHECK(prox_objective(candidate, m, tau) >= best - 1e-12);
        }
    }
}

TEST_CASE("svt is nonexpansive") {
    Gen gen(5);
    for (int trial = 0; trial < 200; ++trial) {
        const MatrixXd a = gen.gaussian(6, 6);
        const MatrixXd b = a + gen.uniform(0.01, 2) * gen.gaussian(6, 6);
        const double tau = gen.uniform(0, 2);
        CHECK((svt(a, tau) - svt(b, tau)).norm() <= (a - b).norm() + 1e-12);
    }
}

TEST_CASE("svt rejects bad input") {
    MatrixXd m = MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(svt(m, -1.0), InvalidArgument);
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(svt(m, 1.0), InvalidArgument);
}

TEST_CASE("procrustes basic cases") {
    CHECK((procrustes(MatrixXd::Identity(3, 3)) - MatrixXd::Identity(3, 3)).norm() <= 1e-12);

    const MatrixXd m = Eigen::Vector2d(2, -3).asDiagonal();
    const MatrixXd p = procrustes(m);
    const MatrixXd expected = Eigen::Vector2d(1, -1).asDiagonal();
    CHECK((p - expected).norm() <= 1e-12);
    CHECK((p.transpose() * m).trace() == doctest::Approx(5.0));
    Gen gen(6);
    for (int k = 0; k < 10000; ++k) {
        const MatrixXd r = gen.orthonormal(2, 2);
        CHECK((r.transpose() * m).trace() <= 5.0 + 1e-12);
    }

    const MatrixXd q = gen.orthonormal(7, 3);
    CHECK((procrustes(q) - q).norm() <= 1e-10);

    CHECK_THROWS_AS(procrustes(MatrixXd::Zero(2, 3)), InvalidArgument);
}

TEST_CASE("procrustes output is orthonormal and dominates random candidates") {
    Gen gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        const MatrixXd m = gen.gaussian(8, 3);
        const MatrixXd p = procrustes(m);
        CHECK((p.transpose() * p - MatrixXd::Identity(3, 3)).norm() <= 1e-10);
        const double best = (p.transpose() * m).trace();
        for (int k = 0; k < 1000; ++k)
            CHECK((gen.orthonormal(8, 3).transpose() * m).trace() <= best + 1e-12);
    }
}

TEST_CASE("procrustes on a rank-deficient matrix still returns orthonormal columns") {
    MatrixXd m = MatrixXd::Zero(5, 3);
    m(0, 0) = 2;
    const MatrixXd p = procrustes(m);
    CHECK((p.transpose() * p - MatrixXd::Identity(3, 3)).norm() <= 1e-10);
    CHECK((p.transpose() * m).trace() == doctest::Approx(2.0));
}

TEST_CASE("spd_solve") {
    Gen gen(8);
    const MatrixXd rhs = gen.gaussian(4, 3);
    CHECK((spd_solve(MatrixXd::Identity(4, 4), rhs) - rhs).norm() <= 1e-14);
    CHECK((spd_solve(2.0 * MatrixXd::Identity(4, 4), rhs) - rhs / 2).norm() <= 1e-14);

    for (int trial = 0; trial < 50; ++trial) {
        const auto n = gen.integer(1, 40);
        const MatrixXd m = gen.gaussian(n, n);
        const MatrixXd a = m.transpose() * m + MatrixXd::Identity(n, n);
        const MatrixXd b = gen.gaussian(n, gen.integer(1, 5));
        const MatrixXd x = spd_solve(a, b);
        CHECK((a * x - b).cwiseAbs().maxCoeff() <= 1e-8 * b.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("spd_solve reports the failing pivot") {
    const MatrixXd a = Eigen::Vector4d(1, 2, -1, 3).asDiagonal();
    try {
        (void)spd_solve(a, MatrixXd::Ones(4, 1));
        FAIL("expected a numerical error");
    } catch (const NumericalError &e) {
        CHECK(e.pivot() == 2);
        CHECK(e.kind() == ErrorKind::numerical_error);
    }

    MatrixXd asym = MatrixXd::Identity(2, 2);
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(spd_solve(asym, MatrixXd::Ones(2, 1)), InvalidArgument);
    CHECK_THROWS_AS(spd_solve(MatrixXd::Identity(2, 2), MatrixXd::Ones(3, 1)), InvalidArgument);
}
