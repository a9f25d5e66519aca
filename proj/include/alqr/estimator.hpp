#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "alqr/control_math.hpp"
#include "alqr/error.hpp"
#include "alqr/reference_model.hpp"

namespace alqr {

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

/// { Theta : ||Theta - center||_F <= radius }. An empty center means zero.
struct FrobeniusBall {
    double radius{1.0};
    Mat center{};
};

/// Diagonal Theta_B with Theta_B(i,i) in [lo(i), hi(i)]; off-diagonals are
/// zero. Each interval excludes zero, so every member is invertible.
struct DiagonalBox {
    Vec lo;
    Vec hi;
};

/// Box for the common case |Theta_B(i,i)| in [b_min, b_max] with known signs.
[[nodiscard]] inline DiagonalBox make_diagonal_box(double b_min, double b_max, const Vec& signs) {
    if (!(b_min > 0.0) || !(b_max >= b_min)) {
        throw Error(Errc::ConfigError, "diagonal box needs 0 < b_min <= b_max");
    }
    DiagonalBox box{Vec(signs.size()), Vec(signs.size())};
    for (Eigen::Index i = 0; i < signs.size(); ++i) {
        if (signs(i) >= 0.0) {
            box.lo(i) = b_min;
            box.hi(i) = b_max;
        } else {
            box.lo(i) = -b_max;
            box.hi(i) = -b_min;
        }
    }
    return box;
}

struct ParamSet {
    FrobeniusBall a;
    std::variant<DiagonalBox, FrobeniusBall> b;

    [[nodiscard]] bool b_is_box() const noexcept { return std::holds_alternative<DiagonalBox>(b); }
};

namespace detail {

inline Mat center_or_zero(const FrobeniusBall& ball, Eigen::Index rows, Eigen::Index cols) {
    return ball.center.size() > 0 ? ball.center : Mat::Zero(rows, cols);
}

} // namespace detail

/// Largest |Theta_B(i,j)|, i != j, for the diagonal box (zero otherwise).
[[nodiscard]] inline double offdiagonal_violation(const ParamSet& set, const Mat& Theta) {
    const Eigen::Index m = Theta.rows();
    if (!set.b_is_box() || m == 0) {
        return 0.0;
    }
    Mat TB = Theta.rightCols(m);
    TB.diagonal().setZero();
    return TB.cwiseAbs().maxCoeff();
}

/// Smallest inequality slack of Theta = [Theta_A, Theta_B] (negative when
/// infeasible). The box's off-diagonal equalities are not included; see
/// offdiagonal_violation.
[[nodiscard]] inline double set_slack(const ParamSet& set, const Mat& Theta, Eigen::Index n) {
    const Eigen::Index m = Theta.rows();
    const Mat TA = Theta.leftCols(n);
    const Mat TB = Theta.rightCols(m);
    double slack = set.a.radius - (TA - detail::center_or_zero(set.a, m, n)).norm();
    if (const auto* box = std::get_if<DiagonalBox>(&set.b)) {
        for (Eigen::Index i = 0; i < m; ++i) {
            slack = std::min({slack, TB(i, i) - box->lo(i), box->hi(i) - TB(i, i)});
        }
    } else {
        const auto& ball = std::get<FrobeniusBall>(set.b);
        slack = std::min(slack, ball.radius - (TB - detail::center_or_zero(ball, m, m)).norm());
    }
    return slack;
}

[[nodiscard]] inline bool set_contains(const ParamSet& set, const Mat& Theta, Eigen::Index n, double tol = 0.0) {
    return set_slack(set, Theta, n) >= -tol && offdiagonal_violation(set, Theta) <= tol;
}

/// Euclidean (unweighted) projection onto the set; rows do not interact
/// beyond the Frobenius-ball scalings.
[[nodiscard]] inline Mat euclidean_project(const ParamSet& set, const Mat& Theta, Eigen::Index n) {
    const Eigen::Index m = Theta.rows();
    Mat out = Theta;
    const Mat cA = detail::center_or_zero(set.a, m, n);
    const double dA = (Theta.leftCols(n) - cA).norm();
    if (dA > set.a.radius) {
        out.leftCols(n) = cA + (set.a.radius / dA) * (Theta.leftCols(n) - cA);
    }
    if (const auto* box = std::get_if<DiagonalBox>(&set.b)) {
        Mat TB = Mat::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            TB(i, i) = std::clamp(Theta(i, n + i), box->lo(i), box->hi(i));
        }
        out.rightCols(m) = TB;
    } else {
        const auto& ball = std::get<FrobeniusBall>(set.b);
        const Mat cB = detail::center_or_zero(ball, m, m);
        const double dB = (Theta.rightCols(m) - cB).norm();
        if (dB > ball.radius) {
            out.rightCols(m) = cB + (ball.radius / dB) * (Theta.rightCols(m) - cB);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weighted projection  argmin_{Theta in S} Tr[(Theta - T')W(Theta - T')']
// ---------------------------------------------------------------------------
//
// The objective separates over rows. The Frobenius balls are the only
// coupling, handled through their Lagrange multipliers: for fixed
// multipliers each row is a small equality/box constrained QP solved in
// closed form, and the multipliers are found by bisection on the (monotone)
// constraint values. The diagonal box has a single bounded coordinate per
// row; minimizing out the free coordinates leaves a convex 1-D quadratic in
// it, so clamping the unconstrained minimizer is exact.

struct ProjectionOptions {
    double tol{1e-12};
    int max_iter{200};
};

namespace detail {

class WeightedProjector {
public:
    WeightedProjector(const ParamSet& set, const Mat& W, const Mat& target, Eigen::Index n)
        : set_(set), W_(W), target_(target), n_(n), m_(target.rows()) {
        cA_ = center_or_zero(set.a, m_, n_);
        if (const auto* ball = std::get_if<FrobeniusBall>(&set.b)) {
            cB_ = center_or_zero(*ball, m_, m_);
        }
        Wt_ = target_ * W_; // row i: W * target_i (W symmetric)
    }

    [[nodiscard]] Mat solve(const ProjectionOptions& opts) {
        if (set_.b_is_box()) {
            return solve_outer(opts, [&](double muA) { return evaluate(muA, 0.0); });
        }
        return solve_outer(opts, [&](double muA) { return solve_inner_b(muA, opts); });
    }

private:
    template <class Eval>
    Mat solve_outer(const ProjectionOptions& opts, Eval&& eval) {
        Mat sol = eval(0.0);
        if (ball_excess_a(sol) <= 0.0) {
            return sol;
        }
        double lo = 0.0;
        double hi = initial_mu();
        int guard = 0;
        for (sol = eval(hi); ball_excess_a(sol) > 0.0; sol = eval(hi)) {
            lo = hi;
            hi *= 4.0;
            if (++guard > opts.max_iter) {
                throw Error(Errc::NonConvergence, "projection: no multiplier bracket for the Theta_A ball");
            }
        }
        return bisect(opts, lo, hi, eval, [&](const Mat& s) { return ball_excess_a(s); });
    }

    Mat solve_inner_b(double muA, const ProjectionOptions& opts) {
        auto eval = [&](double muB) { return evaluate(muA, muB); };
        Mat sol = eval(0.0);
        if (ball_excess_b(sol) <= 0.0) {
            return sol;
        }
        double lo = 0.0;
        double hi = initial_mu();
        int guard = 0;
        for (sol = eval(hi); ball_excess_b(sol) > 0.0; sol = eval(hi)) {
            lo = hi;
            hi *= 4.0;
            if (++guard > opts.max_iter) {
                throw Error(Errc::NonConvergence, "projection: no multiplier bracket for the Theta_B ball");
            }
        }
        return bisect(opts, lo, hi, eval, [&](const Mat& s) { return ball_excess_b(s); });
    }

    // Constraint value is positive (infeasible) at lo and nonpositive at hi;
    // the hi side is always returned so the result is feasible.
    template <class Eval, class Excess>
    Mat bisect(const ProjectionOptions& opts, double lo, double hi, Eval&& eval, Excess&& excess) {
        Mat best = eval(hi);
        for (int it = 0; it < opts.max_iter && hi - lo > opts.tol * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            Mat s = eval(mid);
            if (excess(s) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
                best = std::move(s);
            }
        }
        return best;
    }

    [[nodiscard]] double initial_mu() const { return std::max(1e-8, W_.diagonal().maxCoeff()); }

    [[nodiscard]] double ball_excess_a(const Mat& s) const {
        return (s.leftCols(n_) - cA_).norm() - set_.a.radius;
    }

    [[nodiscard]] double ball_excess_b(const Mat& s) const {
        return (s.rightCols(m_) - cB_).norm() - std::get<FrobeniusBall>(set_.b).radius;
    }

    // Row-wise minimizer of the Lagrangian for multipliers (muA, muB).
    [[nodiscard]] Mat evaluate(double muA, double muB) const {
        const Eigen::Index d = n_ + m_;
        Mat out = Mat::Zero(m_, d);
        Mat H = W_;
        H.diagonal().head(n_).array() += muA;
        H.diagonal().tail(m_).array() += muB;
        const auto* box = std::get_if<DiagonalBox>(&set_.b);
        std::optional<Eigen::LDLT<Mat>> full;
        if (!box) {
            full.emplace(H);
        }

        for (Eigen::Index i = 0; i < m_; ++i) {
            Vec rhs = Wt_.row(i).transpose();
            rhs.head(n_) += muA * cA_.row(i).transpose();
            if (!box) {
                rhs.tail(m_) += muB * cB_.row(i).transpose();
                out.row(i) = full->solve(rhs).transpose();
                continue;
            }
            // Free coordinates: Theta_A row plus the diagonal entry n+i.
            std::vector<Eigen::Index> free(n_);
            for (Eigen::Index k = 0; k < n_; ++k) {
                free[k] = k;
            }
            const Eigen::Index b = n_ + i;
            free.push_back(b);
            const Vec x = solve_subset(H, rhs, free);
            double bval = x(n_);
            const double clamped = std::clamp(bval, box->lo(i), box->hi(i));
            Vec xa = x.head(n_);
            if (clamped != bval) {
                bval = clamped;
                free.pop_back();
                Vec r = rhs;
                r -= H.col(b) * bval;
                xa = solve_subset(H, r, free);
            }
            out.row(i).head(n_) = xa.transpose();
            out(i, b) = bval;
        }
        return out;
    }

    [[nodiscard]] static Vec solve_subset(const Mat& H, const Vec& rhs, const std::vector<Eigen::Index>& idx) {
        const auto k = static_cast<Eigen::Index>(idx.size());
        Mat Hs(k, k);
        Vec rs(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            rs(a) = rhs(idx[a]);
            for (Eigen::Index c = 0; c < k; ++c) {
                Hs(a, c) = H(idx[a], idx[c]);
            }
        }
        return Hs.ldlt().solve(rs);
    }

    const ParamSet& set_;
    const Mat& W_;
    const Mat& target_;
    Eigen::Index n_;
    Eigen::Index m_;
    Mat cA_;
    Mat cB_;
    Mat Wt_;
};

} // namespace detail

/// argmin over Theta in S of Tr[(Theta - Theta')W(Theta - Theta')'] with W
/// symmetric positive definite (the inverse covariance).
[[nodiscard]] inline Mat project(const Mat& theta_prime, const Mat& weight, const ParamSet& set, Eigen::Index n,
                                 ProjectionOptions opts = {}) {
    const Eigen::Index m = theta_prime.rows();
    if (theta_prime.cols() != n + m || weight.rows() != n + m || weight.cols() != n + m) {
        throw Error(Errc::DimensionMismatch, "project: Theta must be m x (n+m) and W (n+m) x (n+m)");
    }
    if (set_contains(set, theta_prime, n)) {
        return theta_prime;
    }
    detail::WeightedProjector proj(set, weight, theta_prime, n);
    return proj.solve(opts);
}

/// Weighted objective of the projection problem.
[[nodiscard]] inline double projection_objective(const Mat& Theta, const Mat& theta_prime, const Mat& weight) {
    const Mat D = Theta - theta_prime;
    return (D * weight * D.transpose()).trace();
}

// ---------------------------------------------------------------------------
// Regression form
// ---------------------------------------------------------------------------

struct Regressor {
    Vec phi; // [-x; u]
    Vec y;
};

/// phi = [-x; u], y = (B_m'B_m)^-1 B_m'(x_next - A_m0 x) + b, where b is the
/// actuator bias (zero for unbiased plants).
[[nodiscard]] inline Regressor regress_targets(const Vec& x_next, const Vec& x, const Vec& u,
                                               const ReferenceModel& ref, const Vec* input_bias = nullptr) {
    const Eigen::Index n = x.size();
    const Eigen::Index m = u.size();
    if (x_next.size() != n || ref.A_m0.rows() != n || ref.B_m.cols() != m) {
        throw Error(Errc::DimensionMismatch, "regress_targets: sizes do not match the reference model");
    }
    Regressor reg;
    reg.phi.resize(n + m);
    reg.phi.head(n) = -x;
    reg.phi.tail(m) = u;
    reg.y = ref.B_m_pinv * (x_next - ref.A_m0 * x);
    if (input_bias && input_bias->size() == m) {
        reg.y += *input_bias;
    }
    return reg;
}

// ---------------------------------------------------------------------------
// WRLS-PROJ
// ---------------------------------------------------------------------------

struct WrlsState {
    Mat Theta_hat; // m x (n+m), [Theta_A, Theta_B]
    Mat Sigma;
    Mat Sigma_inv;
    double z{0.0};
    double gamma{0.5};
    std::size_t steps{0};
    std::size_t resync_every{1000};

    [[nodiscard]] Eigen::Index n() const noexcept { return Theta_hat.cols() - Theta_hat.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return Theta_hat.rows(); }
    [[nodiscard]] Mat theta_A() const { return Theta_hat.leftCols(n()); }
    [[nodiscard]] Mat theta_B() const { return Theta_hat.rightCols(m()); }
};

/// Sigma_0 = sigma0^2 I and z_0 = ||Sigma_0^-1||_2.
[[nodiscard]] inline WrlsState make_wrls(const Mat& theta0, double sigma0, double gamma,
                                         std::size_t resync_every = 1000) {
    if (!(sigma0 > 0.0) || !(gamma > 0.0)) {
        throw Error(Errc::ConfigError, "WRLS needs sigma0 > 0 and gamma > 0");
    }
    const Eigen::Index d = theta0.cols();
    WrlsState s;
    s.Theta_hat = theta0;
    s.Sigma = (sigma0 * sigma0) * Mat::Identity(d, d);
    s.Sigma_inv = (1.0 / (sigma0 * sigma0)) * Mat::Identity(d, d);
    s.z = 1.0 / (sigma0 * sigma0);
    s.gamma = gamma;
    s.resync_every = resync_every;
    return s;
}

/// alpha = 1 / ln(z)^(1+gamma), clamped to 1 while ln(z) <= 1.
[[nodiscard]] inline double wrls_weight(double z, double gamma) {
    const double l = std::log(z);
    return l <= 1.0 ? 1.0 : std::pow(l, -(1.0 + gamma));
}

struct WrlsStepInfo {
    double alpha{1.0};
    Mat theta_prime; // before projection
    bool projected{false};
};

/// In-place WRLS-PROJ step.
inline WrlsStepInfo wrls_apply(WrlsState& s, const Regressor& reg, const ParamSet& set,
                               const ProjectionOptions& popts = {}) {
    const Vec& phi = reg.phi;
    if (phi.size() != s.Theta_hat.cols() || reg.y.size() != s.Theta_hat.rows()) {
        throw Error(Errc::DimensionMismatch, "wrls_update: regressor does not match the estimate");
    }
    WrlsStepInfo info;
    s.z += phi.squaredNorm();
    info.alpha = wrls_weight(s.z, s.gamma);

    const Vec Sphi = s.Sigma * phi;
    const double denom = 1.0 / info.alpha + phi.dot(Sphi);
    if (!(denom > 0.0) || !std::isfinite(denom)) {
        throw Error(Errc::NumericalBreakdown, "1/alpha + phi' Sigma phi is not positive");
    }
    s.Sigma -= (Sphi * Sphi.transpose()) / denom;
    s.Sigma = 0.5 * (s.Sigma + s.Sigma.transpose());
    s.Sigma_inv += info.alpha * (phi * phi.transpose());
    ++s.steps;
    if (s.resync_every > 0 && s.steps % s.resync_every == 0) {
        Eigen::LLT<Mat> llt(s.Sigma_inv);
        if (llt.info() != Eigen::Success) {
            throw Error(Errc::NumericalBreakdown, "inverse covariance lost positive definiteness");
        }
        s.Sigma = llt.solve(Mat::Identity(s.Sigma.rows(), s.Sigma.cols()));
        s.Sigma = 0.5 * (s.Sigma + s.Sigma.transpose());
    }

    const Vec innovation = reg.y - s.Theta_hat * phi;
    info.theta_prime = s.Theta_hat + info.alpha * innovation * (s.Sigma * phi).transpose();
    const Eigen::Index n = s.n();
    if (set_contains(set, info.theta_prime, n)) {
        s.Theta_hat = info.theta_prime;
    } else {
        info.projected = true;
        s.Theta_hat = project(info.theta_prime, s.Sigma_inv, set, n, popts);
    }
    return info;
}

[[nodiscard]] inline WrlsState wrls_update(const WrlsState& state, const Regressor& reg, const ParamSet& set) {
    WrlsState next = state;
    wrls_apply(next, reg, set);
    return next;
}

/// ||inv(Sigma_inv) - Sigma||_F / ||Sigma||_F.
[[nodiscard]] inline double sherman_morrison_gap(const WrlsState& s) {
    const Mat inv = s.Sigma_inv.llt().solve(Mat::Identity(s.Sigma.rows(), s.Sigma.cols()));
    return (inv - s.Sigma).norm() / s.Sigma.norm();
}

/// V = Tr[Theta_tilde Sigma^-1 Theta_tilde'].
[[nodiscard]] inline double lyapunov_diagnostic(const WrlsState& s, const Mat& theta_star) {
    const Mat E = s.Theta_hat - theta_star;
    return (E * s.Sigma_inv * E.transpose()).trace();
}

} // namespace alqr
