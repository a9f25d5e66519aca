#include <iomanip>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "alqr/estimator.hpp"
#include "alqr/reference_model.hpp"
#include "alqr/rng.hpp"
#include "alqr/systems.hpp"

using namespace alqr;

namespace {

ParamSet laplacian_set(double a_max = 4.0) {
    ParamSet set;
    set.a.radius = a_max;
    set.b = make_diagonal_box(0.5, 2.0, Vec::Ones(3));
    return set;
}

Mat random_spd(NoiseStream& rng, Eigen::Index d, double cond_spread) {
    Mat G(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            G(i, j) = rng.gaussian();
        }
    }
    Eigen::HouseholderQR<Mat> qr(G);
    const Mat U = qr.householderQ();
    Vec ev(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        ev(i) = std::pow(cond_spread, static_cast<double>(i) / static_cast<double>(d - 1));
    }
    return U * ev.asDiagonal() * U.transpose();
}

Mat random_mat(NoiseStream& rng, Eigen::Index r, Eigen::Index c, double scale) {
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            M(i, j) = scale * rng.gaussian();
        }
    }
    return M;
}

// Variational inequality for the weighted projection: for every feasible F,
// Tr[(P - T) W (F - P)'] >= 0.
double worst_first_order(const Mat& P, const Mat& T, const Mat& W, const ParamSet& set, Eigen::Index n,
                         NoiseStream& rng) {
    double worst = std::numeric_limits<double>::infinity();
    const Eigen::Index m = P.rows();
    for (int k = 0; k < 64; ++k) {
        Mat F = random_mat(rng, m, n + m, 3.0);
        F = euclidean_project(set, F, n);
        worst = std::min(worst, ((P - T) * W * (F - P).transpose()).trace());
    }
    return worst;
}

} // namespace

TEST(Weights, LogSchedule) {
    EXPECT_DOUBLE_EQ(wrls_weight(1.0, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(wrls_weight(std::exp(1.0), 0.5), 1.0);
    EXPECT_NEAR(wrls_weight(std::exp(4.0), 0.5), 1.0 / 8.0, 1e-15);
}

TEST(Wrls, SingleStepMatchesDirectFormulas) {
    NoiseStream rng(5);
    const Eigen::Index n = 3;
    const Eigen::Index m = 3;
    Mat theta0 = Mat::Zero(m, n + m);
    theta0.rightCols(m).setIdentity();
    WrlsState s = make_wrls(theta0, 10.0, 0.5);
    // Warm up so that alpha < 1 and Sigma is not a multiple of I.
    const ParamSet big = [] {
        ParamSet p;
        p.a.radius = 1e6;
        p.b = FrobeniusBall{1e6, Mat::Identity(3, 3)};
        return p;
    }();
    for (int k = 0; k < 30; ++k) {
        Regressor reg{random_mat(rng, n + m, 1, 2.0).col(0), random_mat(rng, m, 1, 1.0).col(0)};
        wrls_apply(s, reg, big);
    }
    const WrlsState before = s;
    Regressor reg{random_mat(rng, n + m, 1, 2.0).col(0), random_mat(rng, m, 1, 1.0).col(0)};
    const WrlsState after = wrls_update(before, reg, big);

    const double z = before.z + reg.phi.squaredNorm();
    const double alpha = std::pow(std::log(z), -1.5);
    const Mat Sinv = before.Sigma_inv + alpha * reg.phi * reg.phi.transpose();
    const Mat S = Sinv.inverse();
    const Mat theta = before.Theta_hat + alpha * (reg.y - before.Theta_hat * reg.phi) * (S * reg.phi).transpose();
    EXPECT_NEAR(after.z, z, 1e-12);
    EXPECT_LT((after.Sigma_inv - Sinv).norm(), 1e-10 * Sinv.norm());
    EXPECT_LT((after.Sigma - S).norm(), 1e-8 * S.norm());
    EXPECT_LT((after.Theta_hat - theta).norm(), 1e-9 * theta.norm());
}

TEST(Wrls, ShermanMorrisonAndMonotoneInformation) {
    const SystemSetup sys = make_laplacian({}, 2);
    const ReferenceModel ref = make_reference_model(sys.matched.A_m, sys.matched.B_m);
    const Mat theta_star = sys.matched.theta_star();
    Mat theta0 = Mat::Zero(3, 6);
    theta0.rightCols(3).setIdentity();
    WrlsState s = make_wrls(theta0, 10.0, 0.5, 1000);
    const ParamSet set = laplacian_set();
    NoiseStream rng(9);
    double worst_gap = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const Vec x = sample_noise(rng, 3, 1.0);
        const Vec u = sample_noise(rng, 3, 1.0);
        const Vec next = sys.plant.A_star * x + sys.plant.B_star * u + sample_noise(rng, 3, 0.1);
        const Mat prev_inv = s.Sigma_inv;
        wrls_apply(s, regress_targets(next, x, u, ref), set);
        const double min_ev =
            Eigen::SelfAdjointEigenSolver<Mat>(s.Sigma_inv - prev_inv, Eigen::EigenvaluesOnly).eigenvalues()(0);
        ASSERT_GE(min_ev, -1e-12 * s.Sigma_inv.norm()) << t;
        if (t % 97 == 0) {
            worst_gap = std::max(worst_gap, sherman_morrison_gap(s));
        }
    }
    EXPECT_LE(worst_gap, 1e-8);
    EXPECT_LT((s.Theta_hat - theta_star).norm(), 0.05);
}

TEST(Wrls, NoiseFreeLyapunovNonincreasing) {
    const SystemSetup sys = make_laplacian({}, 4);
    const ReferenceModel ref = make_reference_model(sys.matched.A_m, sys.matched.B_m);
    const Mat theta_star = sys.matched.theta_star();
    Mat theta0 = Mat::Zero(3, 6);
    theta0.rightCols(3) = 1.8 * Mat::Identity(3, 3);
    theta0(0, 0) = 2.5;
    WrlsState s = make_wrls(theta0, 10.0, 0.5);
    const ParamSet set = laplacian_set();
    NoiseStream rng(10);
    double V = lyapunov_diagnostic(s, theta_star);
    for (int t = 0; t < 2000; ++t) {
        const Vec x = sample_noise(rng, 3, 1.0);
        const Vec u = sample_noise(rng, 3, 1.0);
        const Vec next = sys.plant.A_star * x + sys.plant.B_star * u;
        wrls_apply(s, regress_targets(next, x, u, ref), set);
        const double Vn = lyapunov_diagnostic(s, theta_star);
        ASSERT_LE(Vn, V * (1.0 + 1e-12) + 1e-14) << t;
        V = Vn;
    }
}

TEST(Regressor, ExactForTrueParameters) {
    const SystemSetup sys = make_quadrotor({});
    const ReferenceModel ref = make_reference_model(sys.matched.A_m, sys.matched.B_m);
    NoiseStream rng(1);
    const Vec x = sample_noise(rng, 12, 1.0);
    const Vec u = sample_noise(rng, 4, 1.0);
    const Vec next = plant_step(sys.plant, x, u, Vec::Zero(12));
    const Regressor reg = regress_targets(next, x, u, ref, &sys.plant.input_bias);
    EXPECT_LT((reg.y - sys.matched.theta_star() * reg.phi).norm(), 1e-9);
    EXPECT_EQ(reg.phi.head(12), -x);
    EXPECT_EQ(reg.phi.tail(4), u);
}

TEST(ParamSets, BoxConstruction) {
    Vec signs(2);
    signs << 1.0, -1.0;
    const DiagonalBox box = make_diagonal_box(0.5, 2.0, signs);
    EXPECT_DOUBLE_EQ(box.lo(1), -2.0);
    EXPECT_DOUBLE_EQ(box.hi(1), -0.5);
    EXPECT_THROW((void)make_diagonal_box(0.0, 1.0, signs), Error);
    EXPECT_THROW((void)make_diagonal_box(2.0, 1.0, signs), Error);
}

TEST(Projection, FeasibleUnchangedAndIdempotent) {
    NoiseStream rng(3);
    const ParamSet set = laplacian_set(1.5);
    for (int k = 0; k < 20; ++k) {
        const Mat W = random_spd(rng, 6, 1e4);
        const Mat T = random_mat(rng, 3, 6, 2.0);
        const Mat P = project(T, W, set, 3);
        ASSERT_TRUE(set_contains(set, P, 3, 1e-9));
        const Mat P2 = project(P, W, set, 3);
        EXPECT_LT((P2 - P).norm(), 1e-9 * std::max(1.0, P.norm()));
    }
    Mat inside = Mat::Zero(3, 6);
    inside.rightCols(3).setIdentity();
    EXPECT_EQ(project(inside, Mat::Identity(6, 6), set, 3), inside);
}

TEST(Projection, FirstOrderOptimality) {
    NoiseStream rng(12);
    for (const bool box : {true, false}) {
        ParamSet set;
        set.a.radius = 1.0;
        if (box) {
            set.b = make_diagonal_box(0.5, 2.0, Vec::Ones(2));
        } else {
            set.b = FrobeniusBall{0.6, Mat::Identity(2, 2)};
        }
        for (int k = 0; k < 10; ++k) {
            const Mat W = random_spd(rng, 5, 1e3);
            const Mat T = random_mat(rng, 2, 5, 3.0);
            const Mat P = project(T, W, set, 3);
            ASSERT_TRUE(set_contains(set, P, 3, 1e-9));
            const double scale = std::max(1.0, ((P - T) * W * (P - T).transpose()).trace());
            EXPECT_GE(worst_first_order(P, T, W, set, 3, rng), -1e-7 * scale) << "box=" << box;
        }
    }
}

TEST(Projection, GridOracle) {
    // One row, one state column: Theta = [a, b] with |a| <= 1, b in [0.5, 2].
    ParamSet set;
    set.a.radius = 1.0;
    set.b = make_diagonal_box(0.5, 2.0, Vec::Ones(1));
    Mat W(2, 2);
    W << 3.0, 1.2, 1.2, 1.0;
    Mat T(1, 2);
    T << 2.0, -0.5;
    const Mat P = project(T, W, set, 1);
    double best = std::numeric_limits<double>::infinity();
    double ba = 0.0;
    double bb = 0.0;
    const int N = 3000;
    for (int i = 0; i <= N; ++i) {
        const double a = -1.0 + 2.0 * i / N;
        for (int j = 0; j <= N; ++j) {
            const double b = 0.5 + 1.5 * j / N;
            Mat X(1, 2);
            X << a, b;
            const double f = projection_objective(X, T, W);
            if (f < best) {
                best = f;
                ba = a;
                bb = b;
            }
        }
    }
    EXPECT_LE(projection_objective(P, T, W), best * (1.0 + 1e-12)) << std::setprecision(17) << projection_objective(P, T, W) << " vs " << best << " P=" << P;
    EXPECT_NEAR(P(0, 0), ba, 2e-3);
    EXPECT_NEAR(P(0, 1), bb, 2e-3);
}

TEST(Projection, OffDiagonalEqualities) {
    const ParamSet set = laplacian_set(10.0);
    Mat T = Mat::Zero(3, 6);
    T.rightCols(3) = Mat::Identity(3, 3);
    T(0, 4) = 0.3;
    EXPECT_FALSE(set_contains(set, T, 3));
    NoiseStream rng(2);
    const Mat P = project(T, random_spd(rng, 6, 10.0), set, 3);
    EXPECT_LT(offdiagonal_violation(set, P), 1e-12);
}
