#pragma once

#include <cstdint>
#include <string>

#include "alqr/control_math.hpp"
#include "alqr/error.hpp"
#include "alqr/rng.hpp"

namespace alqr {

/// Ground-truth plant x' = A* x + B* u - bias_map * input_bias + w.
///
/// For the quadrotor input_bias is the hover thrust b_g acting through the
/// nominal input matrix B_m, which is why bias_map is stored separately from
/// B*. When bias_map is empty B* is used.
struct PlantModel {
    Mat A_star;
    Mat B_star;
    double sigma_w{0.0};
    Vec input_bias{};
    Mat bias_map{};

    [[nodiscard]] Eigen::Index n() const noexcept { return A_star.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return B_star.cols(); }
    [[nodiscard]] bool has_bias() const noexcept { return input_bias.size() > 0; }

    /// State-space drift contributed by the bias, zero when there is none.
    [[nodiscard]] Vec bias_drift() const {
        if (!has_bias()) {
            return Vec::Zero(n());
        }
        const Mat& G = bias_map.size() > 0 ? bias_map : B_star;
        return G * input_bias;
    }
};

/// Matched-uncertainty decomposition A_m = A* + B_m Theta_A*, B* = B_m Theta_B*.
struct MatchedStructure {
    Mat A_m;
    Mat B_m;
    Mat Theta_A_star;
    Mat Theta_B_star;

    [[nodiscard]] Mat theta_star() const {
        Mat T(Theta_A_star.rows(), Theta_A_star.cols() + Theta_B_star.cols());
        T << Theta_A_star, Theta_B_star;
        return T;
    }
};

/// Largest violation of the matching identities.
[[nodiscard]] inline double matching_residual(const PlantModel& plant, const MatchedStructure& ms) {
    const double ra = (ms.A_m - (plant.A_star + ms.B_m * ms.Theta_A_star)).cwiseAbs().maxCoeff();
    const double rb = (plant.B_star - ms.B_m * ms.Theta_B_star).cwiseAbs().maxCoeff();
    return std::max(ra, rb);
}

[[nodiscard]] inline Vec plant_step(const PlantModel& plant, const Vec& x, const Vec& u, const Vec& w) {
    if (x.size() != plant.n() || w.size() != plant.n() || u.size() != plant.m()) {
        throw Error(Errc::DimensionMismatch, "plant_step: x/u/w sizes do not match the plant");
    }
    Vec next = plant.A_star * x + plant.B_star * u + w;
    if (plant.has_bias()) {
        next -= plant.bias_drift();
    }
    return next;
}

/// Factory output: the plant, its matched decomposition, and the prior
/// estimate (A_hat0, B_hat0) with its certainty-equivalent gain K0. The
/// reference model is A_m = A_hat0 + B_hat0 K0, B_m = B_hat0.
struct SystemSetup {
    std::string name;
    PlantModel plant;
    MatchedStructure matched;
    Mat A_hat0;
    Mat B_hat0;
    Mat K0;
};

enum class LaplacianInit { Stable, Unstable };

struct LaplacianOptions {
    LaplacianInit init{LaplacianInit::Unstable};
    double perturbation_scale{1.0};
    // Unstable case: A_hat0 = scale * I. 1.0 is the identity prior; 0.0
    // gives K0 = 0, i.e. no initial feedback.
    double unstable_estimate_scale{0.0};
    double sigma_w{0.1};
    double q_scale{10.0};
    double r_scale{1.0};
    int max_rejections{10000};
};

[[nodiscard]] inline Mat laplacian_A() {
    Mat A(3, 3);
    A << 1.01, 0.01, 0.00,
         0.01, 1.01, 0.01,
         0.00, 0.01, 1.01;
    return A;
}

[[nodiscard]] inline SystemSetup make_laplacian(const LaplacianOptions& opts, std::uint64_t seed) {
    if (opts.perturbation_scale < 0.0 || opts.perturbation_scale > 1.0) {
        throw Error(Errc::ConfigError, "laplacian perturbation_scale must lie in [0, 1]");
    }
    const Mat A = laplacian_A();
    const Mat I = Mat::Identity(3, 3);
    const Mat Q = opts.q_scale * I;
    const Mat R = opts.r_scale * I;

    SystemSetup s;
    s.name = "laplacian";
    s.plant = PlantModel{A, I, opts.sigma_w, {}, {}};
    s.B_hat0 = I;

    if (opts.init == LaplacianInit::Unstable) {
        s.A_hat0 = opts.unstable_estimate_scale * I;
        s.K0 = dlqr(s.A_hat0, s.B_hat0, Q, R);
    } else {
        // A_hat0 = I + (1 - Delta) o (A* - I), Delta entrywise uniform,
        // redrawn until K0 stabilizes the true plant.
        NoiseStream stream(derive_seed(seed, "laplacian-perturbation"));
        const Mat D = A - I;
        bool accepted = false;
        for (int attempt = 0; attempt < opts.max_rejections && !accepted; ++attempt) {
            Mat Delta(3, 3);
            for (Eigen::Index i = 0; i < 3; ++i) {
                for (Eigen::Index j = 0; j < 3; ++j) {
                    Delta(i, j) = stream.uniform(-opts.perturbation_scale, opts.perturbation_scale);
                }
            }
            s.A_hat0 = I + (Mat::Ones(3, 3) - Delta).cwiseProduct(D);
            s.K0 = dlqr(s.A_hat0, s.B_hat0, Q, R);
            accepted = spectral_radius(A + s.K0) < 1.0;
        }
        if (!accepted) {
            throw Error(Errc::NonConvergence, "no stabilizing perturbation found");
        }
    }

    s.matched.B_m = s.B_hat0;
    s.matched.A_m = s.A_hat0 + s.B_hat0 * s.K0;
    s.matched.Theta_A_star = s.matched.A_m - A; // B_m = I
    s.matched.Theta_B_star = I;
    return s;
}

struct QuadrotorParams {
    double g{9.81};
    double mass{0.4};
    double arm{0.1143};
    double Ixx{2.09e-3};
    double Iyy{2.09e-3};
    double Izz{4.18e-3};
    double drag{0.01524};
};

struct QuadrotorOptions {
    double dt{0.01};
    Vec epsilon{Vec::Constant(4, 1.0)};
    double sigma_w{0.01};
    double q_scale{10.0};
    double r_scale{1.0};
    QuadrotorParams params{};
};

// State order: x y z theta phi psi vx vy vz q p r.
// Input columns of B_c1: F, tau_y, tau_x, tau_z.
[[nodiscard]] inline SystemSetup make_quadrotor(const QuadrotorOptions& opts) {
    if (!(opts.dt > 0.0)) {
        throw Error(Errc::ConfigError, "quadrotor dt must be positive");
    }
    if (opts.epsilon.size() != 4) {
        throw Error(Errc::DimensionMismatch, "quadrotor epsilon must have 4 entries");
    }
    for (Eigen::Index i = 0; i < 4; ++i) {
        if (!(opts.epsilon(i) > 0.0)) {
            throw Error(Errc::InvalidLOE, "loss-of-effectiveness entries must be positive");
        }
    }
    const QuadrotorParams& p = opts.params;

    Mat Ac = Mat::Zero(12, 12);
    Ac(0, 6) = 1.0;  // x' = vx
    Ac(1, 7) = 1.0;  // y' = vy
    Ac(2, 8) = 1.0;  // z' = vz
    Ac(3, 9) = 1.0;  // theta' = q
    Ac(4, 10) = 1.0; // phi' = p
    Ac(5, 11) = 1.0; // psi' = r
    Ac(6, 3) = p.g;  // vx' = g theta
    Ac(7, 4) = -p.g; // vy' = -g phi

    Mat Bc1 = Mat::Zero(12, 4);
    Bc1(8, 0) = 1.0 / p.mass;
    Bc1(9, 1) = 1.0 / p.Iyy;
    Bc1(10, 2) = 1.0 / p.Ixx;
    Bc1(11, 3) = 1.0 / p.Izz;

    Mat Bc2(4, 4);
    Bc2 << 1.0, 1.0, 1.0, 1.0,
           p.arm, 0.0, -p.arm, 0.0,
           0.0, p.arm, 0.0, -p.arm,
           p.drag, -p.drag, p.drag, -p.drag;

    const Mat A = Mat::Identity(12, 12) + opts.dt * Ac;
    const Mat Bm = opts.dt * Bc1 * Bc2;
    const Mat ThetaB = opts.epsilon.asDiagonal();

    SystemSetup s;
    s.name = "quadrotor";
    s.plant.A_star = A;
    s.plant.B_star = Bm * ThetaB;
    s.plant.sigma_w = opts.sigma_w;
    s.plant.input_bias = Vec::Constant(4, p.mass * p.g / 4.0);
    s.plant.bias_map = Bm;

    s.A_hat0 = A;
    s.B_hat0 = Bm;
    s.K0 = dlqr(A, Bm, opts.q_scale * Mat::Identity(12, 12), opts.r_scale * Mat::Identity(4, 4));

    s.matched.A_m = A + Bm * s.K0;
    s.matched.B_m = Bm;
    s.matched.Theta_A_star = s.K0;
    s.matched.Theta_B_star = ThetaB;
    return s;
}

} // namespace alqr
