#include <cmath>

#include <gtest/gtest.h>

#include "alqr/control_math.hpp"
#include "alqr/systems.hpp"

using namespace alqr;

namespace {

// Positive root of the scalar Riccati map f(p) = q + a^2 p - a^2 b^2 p^2 / (r + b^2 p) - p,
// by bisection on a bracket that does not depend on the solver.
double scalar_riccati_root(double a, double b, double q, double r) {
    auto f = [&](double p) { return q + a * a * p - a * a * b * b * p * p / (r + b * b * p) - p; };
    double lo = 0.0;
    double hi = 1.0;
    while (f(hi) > 0.0) {
        hi *= 2.0;
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

} // namespace

TEST(Dare, ScalarQuadraticRoot) {
    // a = 0.5, b = q = r = 1 reduces to p^2 - 0.25 p - 1 = 0.
    const double p_exact = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
    const auto sol = solve_dare(scalar(0.5), scalar(1.0), scalar(1.0), scalar(1.0));
    EXPECT_NEAR(sol.P(0, 0), p_exact, 1e-9);
    EXPECT_NEAR(sol.P(0, 0), 1.1328, 1e-4);
    EXPECT_NEAR(sol.K(0, 0), -0.5 * p_exact / (1.0 + p_exact), 1e-9);
    EXPECT_NEAR(sol.K(0, 0), -0.2656, 1e-4);
}

TEST(Dare, ScalarCasesMatchBisection) {
    const double cases[][4] = {{0.5, 1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}, {1.2, 0.7, 2.0, 0.5},
                               {-0.9, 2.0, 0.1, 3.0}, {3.0, 1.0, 10.0, 1.0}};
    for (const auto& c : cases) {
        const auto sol = solve_dare(scalar(c[0]), scalar(c[1]), scalar(c[2]), scalar(c[3]));
        const double p = scalar_riccati_root(c[0], c[1], c[2], c[3]);
        EXPECT_NEAR(sol.P(0, 0), p, 1e-8 * std::max(1.0, p)) << "a=" << c[0];
        EXPECT_NEAR(sol.K(0, 0), -c[0] * c[1] * p / (c[3] + c[1] * c[1] * p), 1e-8);
        EXPECT_LE(sol.residual, 1e-8);
        EXPECT_LT(std::abs(c[0] + c[1] * sol.K(0, 0)), 1.0);
    }
}

TEST(Dare, ZeroDynamicsGiveZeroGain) {
    const Mat A = Mat::Zero(3, 3);
    const Mat B = Mat::Identity(3, 3);
    const auto sol = solve_dare(A, B, 10.0 * Mat::Identity(3, 3), Mat::Identity(3, 3));
    EXPECT_LT(sol.K.norm(), 1e-14);
    EXPECT_LT((sol.P - 10.0 * Mat::Identity(3, 3)).norm(), 1e-12);
}

TEST(Dare, LaplacianAndQuadrotor) {
    const Mat A = laplacian_A();
    const Mat I = Mat::Identity(3, 3);
    const auto lap = solve_dare(A, I, 10.0 * I, I);
    EXPECT_LE(dare_residual(A, I, 10.0 * I, I, lap.P), 1e-8);
    EXPECT_LT(spectral_radius(A + lap.K), 1.0);
    EXPECT_LT((lap.P - lap.P.transpose()).norm(), 1e-12);

    const SystemSetup quad = make_quadrotor({});
    const Mat Q = 10.0 * Mat::Identity(12, 12);
    const Mat R = Mat::Identity(4, 4);
    const auto qs = solve_dare(quad.plant.A_star, quad.plant.B_star, Q, R);
    EXPECT_LE(dare_residual(quad.plant.A_star, quad.plant.B_star, Q, R, qs.P), 1e-8);
    EXPECT_LT(spectral_radius(quad.plant.A_star + quad.plant.B_star * qs.K), 1.0);
}

TEST(Dare, GainMatchesClosedForm) {
    const Mat A = laplacian_A();
    const Mat B = Mat::Identity(3, 3);
    const Mat R = 2.0 * Mat::Identity(3, 3);
    const auto sol = solve_dare(A, B, Mat::Identity(3, 3), R);
    const Mat K = -(R + B.transpose() * sol.P * B).inverse() * B.transpose() * sol.P * A;
    EXPECT_LT((K - sol.K).norm(), 1e-9);
    EXPECT_LT((dlqr(A, B, Mat::Identity(3, 3), R) - sol.K).norm(), 1e-14);
}

TEST(Dare, Errors) {
    // Unstabilizable: the unstable mode is not reachable.
    EXPECT_THROW(
        {
            try {
                (void)solve_dare(scalar(2.0), scalar(0.0), scalar(1.0), scalar(1.0));
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::NonConvergence);
                throw;
            }
        },
        Error);
    EXPECT_THROW(
        {
            try {
                // Two identical input columns with R = 0 make R + B'PB rank one.
                (void)solve_dare(scalar(1.0), Mat::Ones(1, 2), scalar(1.0), Mat::Zero(2, 2));
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::IllConditioned);
                throw;
            }
        },
        Error);
    try {
        (void)solve_dare(Mat::Identity(2, 2), Mat::Identity(3, 1), Mat::Identity(2, 2), scalar(1.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::DimensionMismatch);
    }
}

TEST(SpectralRadius, LaplacianEigenvalues) {
    // Tridiagonal Toeplitz: eigenvalues 1.01 + 0.02 cos(k pi / 4), k = 1..3.
    EXPECT_NEAR(spectral_radius(laplacian_A()), 1.01 + 0.02 * std::cos(M_PI / 4.0), 1e-12);
    EXPECT_NEAR(spectral_radius(laplacian_A()), 1.0241421, 1e-7);
    Mat rot(2, 2);
    rot << 0.0, -0.5, 0.5, 0.0;
    EXPECT_NEAR(spectral_radius(rot), 0.5, 1e-14);
}

TEST(Dlyap, MatchesSeries) {
    Mat A(3, 3);
    A << 0.5, 0.1, 0.0, -0.2, 0.3, 0.4, 0.0, 0.1, -0.6;
    Mat Q(3, 3);
    Q << 2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0;
    Mat series = Mat::Zero(3, 3);
    Mat Ak = Mat::Identity(3, 3);
    for (int k = 0; k < 400; ++k) {
        series += Ak.transpose() * Q * Ak;
        Ak = A * Ak;
    }
    const Mat P = solve_dlyap(A, Q);
    EXPECT_LT((P - series).norm(), 1e-10);
    EXPECT_LT(dlyap_residual(A, Q, P), 1e-12);
}

TEST(Dlyap, ScalarAndUnstable) {
    // p = a^2 p + q  =>  p = q / (1 - a^2).
    EXPECT_NEAR(solve_dlyap(scalar(0.6), scalar(1.0))(0, 0), 1.0 / 0.64, 1e-13);
    try {
        (void)solve_dlyap(laplacian_A(), Mat::Identity(3, 3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnstableMatrix);
    }
}
