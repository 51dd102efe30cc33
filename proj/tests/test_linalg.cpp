#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "evqa/linalg.hpp"

using namespace evqa;
using evqa::la::Mat;

TEST_CASE("lu determinant and inverse on a known matrix", "[linalg]") {
    Mat a(2, 2);
    a(0, 0) = 2;
    a(0, 1) = 0;
    a(1, 0) = 0;
    a(1, 1) = 3;
    REQUIRE(la::determinant(a) == Catch::Approx(6.0));
    Mat inv = la::inverse(a);
    REQUIRE(inv(0, 0) == Catch::Approx(0.5));
    REQUIRE(inv(1, 1) == Catch::Approx(1.0 / 3.0));

    Mat zero(3, 3);
    REQUIRE(la::determinant(zero) == 0.0);
    REQUIRE_THROWS_AS(la::inverse(zero), SingularMatrixError);
}

TEST_CASE("random matrices invert to identity", "[linalg]") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + int(trial % 7);
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = normal(rng) + (i == j ? 3.0 : 0.0);
        Mat prod = a * la::inverse(a);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                REQUIRE(prod(i, j) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-9));
    }
}

TEST_CASE("cholesky accepts PD and rejects indefinite matrices", "[linalg]") {
    Mat pd(2, 2);
    pd(0, 0) = 4;
    pd(0, 1) = 1;
    pd(1, 0) = 1;
    pd(1, 1) = 3;
    auto l = la::cholesky(pd);
    REQUIRE(l.has_value());
    // L L^T == A
    Mat back = *l * l->transposed();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) REQUIRE(back(i, j) == Catch::Approx(pd(i, j)));

    Mat indef = pd;
    indef(1, 1) = -3;
    REQUIRE_FALSE(la::cholesky(indef).has_value());
}

TEST_CASE("jacobi eigensolver recovers known spectra", "[linalg]") {
    Mat a(3, 3);
    a(0, 0) = 2;
    a(1, 1) = -1;
    a(2, 2) = 5;
    auto es = la::jacobi_eigen(a);
    REQUIRE(es.values[0] == Catch::Approx(-1.0));
    REQUIRE(es.values[1] == Catch::Approx(2.0));
    REQUIRE(es.values[2] == Catch::Approx(5.0));

    // symmetric 2x2 with analytic eigenvalues 1 and 3
    Mat b(2, 2);
    b(0, 0) = 2;
    b(0, 1) = 1;
    b(1, 0) = 1;
    b(1, 1) = 2;
    auto eb = la::jacobi_eigen(b);
    REQUIRE(eb.values[0] == Catch::Approx(1.0));
    REQUIRE(eb.values[1] == Catch::Approx(3.0));
}

TEST_CASE("pca projects dominant variance onto the first axis", "[linalg]") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0, 1);
    const int n = 400;
    Mat data(n, 3);
    for (int i = 0; i < n; ++i) {
        const double t = normal(rng);
        data(i, 0) = 5.0 * t + 0.1 * normal(rng);
        data(i, 1) = -5.0 * t + 0.1 * normal(rng);
        data(i, 2) = 0.3 * normal(rng);
    }
    Mat proj = la::pca2(data);
    REQUIRE(proj.rows() == n);
    REQUIRE(proj.cols() == 2);
    double var0 = 0, var1 = 0;
    for (int i = 0; i < n; ++i) {
        var0 += proj(i, 0) * proj(i, 0);
        var1 += proj(i, 1) * proj(i, 1);
    }
    REQUIRE(var0 > 10.0 * var1);
}

TEST_CASE("kd-tree nearest neighbor matches brute force", "[linalg]") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0, 1);
    const int n = 300, d = 3;
    Mat pts(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) pts(i, j) = unit(rng);
    la::KdTree tree(pts);
    for (int i = 0; i < n; i += 17) {
        double best = 1e300;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0;
            for (int k = 0; k < d; ++k) {
                const double diff = pts(i, k) - pts(j, k);
                s += diff * diff;
            }
            best = std::min(best, s);
        }
        REQUIRE(tree.nn_distance(i) == Catch::Approx(std::sqrt(best)));
    }
}

TEST_CASE("nearest-neighbor entropy approximates the Gaussian closed form", "[linalg]") {
    Mat cov(2, 2);
    cov(0, 0) = 1.0;
    cov(1, 1) = 4.0;
    cov(0, 1) = cov(1, 0) = 0.8;
    Mat samples = la::sample_gaussian(cov, 40000, 123);
    const double est = la::nn_entropy(samples);
    const double log_det = std::log(cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0));
    const double closed = 0.5 * (2.0 * (1.0 + std::log(2.0 * M_PI)) + log_det);
    REQUIRE(est == Catch::Approx(closed).margin(0.05));
}
