#pragma once

#include <cstddef>

#include "alqr/control_math.hpp"
#include "alqr/estimator.hpp"
#include "alqr/mrac.hpp"
#include "alqr/systems.hpp"

namespace alqr {

/// Non-adaptive optimal gain K* = dlqr(A*, B*, Q, R).
[[nodiscard]] inline Mat optimal_controller(const PlantModel& plant, const Mat& Q, const Mat& R) {
    return dlqr(plant.A_star, plant.B_star, Q, R);
}

/// Nominal certainty equivalence on the same matched regression as MRAC-LQR.
/// The gain is only recomputed at epoch boundaries.
struct CeState {
    WrlsState wrls;
    ReferenceModel ref; // regression only; A_mk is unused
    Mat K_hat;
    EpochClock clock;
    std::size_t skipped_updates{0};
};

/// u = K_hat x + r + Theta_B^-1 b.
[[nodiscard]] inline Vec ce_control(const CeState& s, const Vec& x, const Vec& r, const Vec* input_bias = nullptr) {
    Vec u = s.K_hat * x + r;
    if (input_bias && input_bias->size() == u.size()) {
        u += detail::solve_theta_b(s.wrls.theta_B(), *input_bias);
    }
    return u;
}

/// K_hat = dlqr(A_m0 - B_m Theta_A, B_m Theta_B, Q, R); the previous gain is
/// kept for another epoch if the DARE fails. Returns true on update.
inline bool ce_epoch_update(CeState& s, const Mat& Q, const Mat& R, DareOptions dare = {}) {
    const auto [A_hat, B_hat] = matched_estimate(s.ref, s.wrls.Theta_hat);
    bool updated = false;
    try {
        s.K_hat = dlqr(A_hat, B_hat, Q, R, dare);
        updated = true;
    } catch (const Error& e) {
        if (e.code() != Errc::NonConvergence && e.code() != Errc::IllConditioned) {
            throw;
        }
        ++s.skipped_updates;
    }
    s.clock.advance();
    return updated;
}

} // namespace alqr
