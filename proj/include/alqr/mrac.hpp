#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alqr/control_math.hpp"
#include "alqr/error.hpp"
#include "alqr/estimator.hpp"
#include "alqr/reference_model.hpp"
#include "alqr/rng.hpp"
#include "alqr/systems.hpp"

namespace alqr {

// ---------------------------------------------------------------------------
// Epoch scheduling
// ---------------------------------------------------------------------------

enum class ScheduleMode { Exponential, Linear };

/// Length of epoch k: C_T 2^k (exponential) or C_T (k+1) (linear).
[[nodiscard]] inline std::size_t epoch_schedule(ScheduleMode mode, std::size_t C_T, std::size_t k) {
    if (C_T < 1) {
        throw Error(Errc::ConfigError, "C_T must be at least 1");
    }
    if (mode == ScheduleMode::Linear) {
        return C_T * (k + 1);
    }
    if (k >= 63) {
        return static_cast<std::size_t>(-1);
    }
    return C_T << k;
}

struct EpochClock {
    ScheduleMode mode{ScheduleMode::Linear};
    std::size_t C_T{500};
    std::size_t k{0};
    std::size_t start{0};
    std::size_t len{0};

    EpochClock() = default;
    EpochClock(ScheduleMode mode_, std::size_t C_T_) : mode(mode_), C_T(C_T_), len(epoch_schedule(mode_, C_T_, 0)) {}

    /// True once step t is the first step after the current epoch.
    [[nodiscard]] bool ends_before(std::size_t t) const noexcept { return t >= start + len; }

    void advance() {
        start += len;
        ++k;
        len = epoch_schedule(mode, C_T, k);
    }
};

// ---------------------------------------------------------------------------
// Exploration
// ---------------------------------------------------------------------------

enum class ExplorationMode { Off, Sinusoidal, Gaussian };

struct ExplorationConfig {
    ExplorationMode mode{ExplorationMode::Off};
    double C_r{0.0};
    double decay_exponent{1.0 / 6.0};
    std::vector<double> frequencies{};
    double sigma_explore{0.0};
    std::uint64_t seed{0};
};

/// omega_i = pi (2i - 1) / (2d + 1), i = 1..d with d = ceil((n+m)/2).
[[nodiscard]] inline std::vector<double> default_frequencies(Eigen::Index n, Eigen::Index m) {
    const auto d = static_cast<std::size_t>((n + m + 1) / 2);
    std::vector<double> w(d);
    for (std::size_t i = 1; i <= d; ++i) {
        w[i - 1] = std::numbers::pi * static_cast<double>(2 * i - 1) / static_cast<double>(2 * d + 1);
    }
    return w;
}

inline void validate_exploration(const ExplorationConfig& cfg, Eigen::Index n, Eigen::Index m) {
    if (cfg.mode != ExplorationMode::Sinusoidal) {
        return;
    }
    const auto need = static_cast<std::size_t>((n + m + 1) / 2);
    if (cfg.frequencies.size() < need) {
        throw Error(Errc::ConfigError, "sinusoidal exploration needs at least ceil((n+m)/2) frequencies");
    }
    for (std::size_t i = 0; i < cfg.frequencies.size(); ++i) {
        const double w = cfg.frequencies[i];
        if (!(w > 0.0 && w < std::numbers::pi)) {
            throw Error(Errc::ConfigError, "exploration frequencies must lie in (0, pi)");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (cfg.frequencies[j] == w) {
                throw Error(Errc::ConfigError, "exploration frequencies must be pairwise distinct");
            }
        }
    }
}

/// Amplitude multiplier 2^(-k * decay_exponent) for epoch k.
[[nodiscard]] inline double exploration_decay(const ExplorationConfig& cfg, std::size_t k) {
    return std::exp2(-static_cast<double>(k) * cfg.decay_exponent);
}

/// Exploratory input r_t for epoch k.
///
/// Sinusoidal: r_j = C_r 2^(-k beta) sum_i sin(omega_i t + 2 pi i j / m).
/// The phase pattern gives frequency i the i-th discrete Fourier vector over
/// the channels, so the amplitude directions span R^m once d >= m.
/// Gaussian: N(0, (sigma 2^(-k beta))^2 I), drawn from the exploration stream.
[[nodiscard]] inline Vec exploration_signal(const ExplorationConfig& cfg, std::size_t k, std::size_t t,
                                            NoiseStream& stream, Eigen::Index m) {
    Vec r = Vec::Zero(m);
    const double decay = exploration_decay(cfg, k);
    switch (cfg.mode) {
    case ExplorationMode::Off:
        break;
    case ExplorationMode::Sinusoidal: {
        const double tt = static_cast<double>(t);
        for (Eigen::Index j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < cfg.frequencies.size(); ++i) {
                const double phase = 2.0 * std::numbers::pi * static_cast<double>((i + 1) * static_cast<std::size_t>(j)) /
                                     static_cast<double>(m);
                acc += std::sin(cfg.frequencies[i] * tt + phase);
            }
            r(j) = cfg.C_r * decay * acc;
        }
        break;
    }
    case ExplorationMode::Gaussian:
        r = sample_noise(stream, m, cfg.sigma_explore * decay);
        break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// MRAC-LQR controller
// ---------------------------------------------------------------------------

struct MracState {
    WrlsState wrls;
    ReferenceModel ref;
    Mat theta_offset; // m x n
    EpochClock clock;
    std::size_t skipped_updates{0};
    Mat K_hat{}; // gain behind the current A_mk (empty before the first update)
};

[[nodiscard]] inline MracState make_mrac(WrlsState wrls, ReferenceModel ref, EpochClock clock) {
    MracState s{std::move(wrls), std::move(ref), Mat(), clock, 0, Mat()};
    s.theta_offset = Mat::Zero(s.wrls.m(), s.wrls.n());
    return s;
}

namespace detail {

inline Vec solve_theta_b(const Mat& theta_B, const Vec& rhs) {
    Eigen::FullPivLU<Mat> lu(theta_B);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
        throw Error(Errc::SingularThetaB, "Theta_B estimate is singular; check the parameter set");
    }
    return lu.solve(rhs);
}

} // namespace detail

/// u = Theta_B^-1 ((Theta_A + offset) x + r) + Theta_B^-1 b.
[[nodiscard]] inline Vec control_input(const MracState& s, const Vec& x, const Vec& r, const Vec* input_bias = nullptr) {
    const Eigen::Index n = s.wrls.n();
    const Eigen::Index m = s.wrls.m();
    Vec rhs = (s.wrls.Theta_hat.leftCols(n) + s.theta_offset) * x + r;
    if (input_bias && input_bias->size() == m) {
        rhs += *input_bias;
    }
    return detail::solve_theta_b(s.wrls.Theta_hat.rightCols(m), rhs);
}

/// Certainty-equivalent model implied by a matched estimate:
/// A_hat = A_m0 - B_m Theta_A, B_hat = B_m Theta_B.
[[nodiscard]] inline std::pair<Mat, Mat> matched_estimate(const ReferenceModel& ref, const Mat& theta_hat) {
    const Eigen::Index m = theta_hat.rows();
    const Eigen::Index n = theta_hat.cols() - m;
    return {ref.A_m0 - ref.B_m * theta_hat.leftCols(n), ref.B_m * theta_hat.rightCols(m)};
}

/// End-of-epoch update: re-solve LQR on the current estimate, move the
/// reference model to its closed loop and set the gain offset so that
/// A_mk = A_m0 + B_m offset. When the DARE fails (or returns a non-Schur
/// loop) the previous reference model is kept. Returns true on update.
inline bool epoch_update(MracState& s, const Mat& Q, const Mat& R, DareOptions dare = {}) {
    const Eigen::Index n = s.wrls.n();
    const Eigen::Index m = s.wrls.m();
    const Mat theta_A = s.wrls.Theta_hat.leftCols(n);
    const Mat theta_B = s.wrls.Theta_hat.rightCols(m);
    const auto [A_hat, B_hat] = matched_estimate(s.ref, s.wrls.Theta_hat);
    bool updated = false;
    try {
        Mat K = dlqr(A_hat, B_hat, Q, R, dare);
        Mat A_new = A_hat + B_hat * K;
        if (spectral_radius(A_new) < 1.0) {
            s.ref.A_mk = std::move(A_new);
            s.theta_offset = theta_B * K - theta_A;
            s.K_hat = std::move(K);
            updated = true;
        }
    } catch (const Error& e) {
        if (e.code() != Errc::NonConvergence && e.code() != Errc::IllConditioned) {
            throw;
        }
    }
    if (!updated) {
        ++s.skipped_updates;
    }
    s.clock.advance();
    return updated;
}

/// ||A_mk - (A_m0 + B_m offset)||_F.
[[nodiscard]] inline double offset_identity_residual(const MracState& s) {
    return (s.ref.A_mk - (s.ref.A_m0 + s.ref.B_m * s.theta_offset)).norm();
}

// ---------------------------------------------------------------------------
// Comparator system
// ---------------------------------------------------------------------------

struct ComparatorState {
    Vec x_c;
};

struct ComparatorStep {
    ComparatorState next;
    Vec nu;
    double identity_residual{0.0};
};

/// x_c' = A_mk x_c + B_m r + w, with nu = Theta_B*^-1((Theta_A* + offset) x_c + r).
/// The two forms of the recursion are checked against each other.
[[nodiscard]] inline ComparatorStep comparator_step(const ComparatorState& c, const ReferenceModel& ref,
                                                    const Mat& theta_offset, const PlantModel& plant,
                                                    const MatchedStructure& truth, const Vec& r, const Vec& w,
                                                    double tol = 1e-9) {
    ComparatorStep out;
    out.next.x_c = ref.A_mk * c.x_c + ref.B_m * r + w;
    out.nu = detail::solve_theta_b(truth.Theta_B_star, (truth.Theta_A_star + theta_offset) * c.x_c + r);
    const Vec alt = plant.A_star * c.x_c + plant.B_star * out.nu + w;
    out.identity_residual = (alt - out.next.x_c).norm();
    const double scale = std::max(1.0, c.x_c.norm() + r.norm());
    if (out.identity_residual > tol * scale) {
        throw Error(Errc::IdentityViolation,
                    "comparator recursions disagree by " + std::to_string(out.identity_residual));
    }
    return out;
}

/// || e_c(t+1) - (A_mk e_c(t) - B_m Theta_tilde phi) ||.
[[nodiscard]] inline double error_model_check(const Vec& x, const Vec& x_c, const Vec& next_x, const Vec& next_x_c,
                                              const ReferenceModel& ref, const Mat& theta_tilde, const Vec& phi) {
    const Vec e = x - x_c;
    const Vec e_next = next_x - next_x_c;
    return (e_next - (ref.A_mk * e - ref.B_m * (theta_tilde * phi))).norm();
}

} // namespace alqr
