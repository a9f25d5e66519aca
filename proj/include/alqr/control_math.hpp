#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <string>

#include "alqr/error.hpp"

namespace alqr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct DareSolution {
    Mat P;
    Mat K; // u = K x, sign already folded in
    double residual{0.0};
    std::size_t iterations{0};
};

struct DareOptions {
    double tol{1e-10};
    std::size_t max_iter{100000};
};

namespace detail {

inline void require(bool cond, Errc code, const std::string& msg) {
    if (!cond) {
        throw Error(code, msg);
    }
}

inline void require_square(const Mat& A, const char* name) {
    require(A.rows() == A.cols(), Errc::DimensionMismatch, std::string(name) + " must be square");
}

// Right-hand side of the Riccati map together with the gain it implies.
struct RiccatiStep {
    Mat next;
    Mat K;
};

inline RiccatiStep riccati_step(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P) {
    const Mat BtP = B.transpose() * P;
    const Mat S = R + BtP * B;
    Eigen::LDLT<Mat> ldlt(S);
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-13 * scale) {
        throw Error(Errc::IllConditioned, "R + B'PB is numerically singular");
    }
    const Mat BtPA = BtP * A;
    Mat K = -ldlt.solve(BtPA);
    // A'PA - A'PB (R+B'PB)^-1 B'PA + Q, written with K to reuse the solve.
    Mat next = A.transpose() * P * A + BtPA.transpose() * K + Q;
    next = 0.5 * (next + next.transpose());
    return {std::move(next), std::move(K)};
}

} // namespace detail

/// Largest eigenvalue magnitude. Eigen's real Schur (Hessenberg + shifted QR).
[[nodiscard]] inline double spectral_radius(const Mat& A) {
    detail::require_square(A, "A");
    if (A.size() == 0) {
        return 0.0;
    }
    Eigen::EigenSolver<Mat> es(A, /*computeEigenvectors=*/false);
    detail::require(es.info() == Eigen::Success, Errc::NonConvergence, "eigenvalue iteration failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

[[nodiscard]] inline double dare_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P) {
    return (detail::riccati_step(A, B, Q, R, P).next - P).norm();
}

/// Discrete algebraic Riccati equation by value iteration from P = Q.
///
/// Iterates P <- A'PA - A'PB(R+B'PB)^-1 B'PA + Q until the Frobenius
/// residual of the current iterate is at most opts.tol. The returned K is
/// -(R+B'PB)^-1 B'PA evaluated at the returned P.
[[nodiscard]] inline DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                                             DareOptions opts = {}) {
    detail::require_square(A, "A");
    detail::require_square(Q, "Q");
    detail::require_square(R, "R");
    detail::require(B.rows() == A.rows() && Q.rows() == A.rows() && R.rows() == B.cols(),
                    Errc::DimensionMismatch, "inconsistent DARE dimensions");

    Mat P = 0.5 * (Q + Q.transpose());
    for (std::size_t it = 0; it <= opts.max_iter; ++it) {
        auto step = detail::riccati_step(A, B, Q, R, P);
        const double residual = (step.next - P).norm();
        if (!std::isfinite(residual)) {
            throw Error(Errc::NonConvergence, "Riccati iteration diverged");
        }
        if (residual <= opts.tol) {
            return {std::move(P), std::move(step.K), residual, it};
        }
        P = std::move(step.next);
    }
    throw Error(Errc::NonConvergence,
                "DARE residual above tolerance after " + std::to_string(opts.max_iter) + " iterations");
}

/// Optimal state feedback gain for u = K x.
[[nodiscard]] inline Mat dlqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, DareOptions opts = {}) {
    return solve_dare(A, B, Q, R, opts).K;
}

/// Solves A'PA - P + Qrhs = 0 through the n^2 x n^2 system
/// (I - A' (x) A') vec(P) = vec(Qrhs).
[[nodiscard]] inline Mat solve_dlyap(const Mat& A, const Mat& Qrhs) {
    detail::require_square(A, "A");
    detail::require(Qrhs.rows() == A.rows() && Qrhs.cols() == A.cols(), Errc::DimensionMismatch,
                    "Qrhs must match A");
    if (spectral_radius(A) >= 1.0 - 1e-9) {
        throw Error(Errc::UnstableMatrix, "dlyap requires a Schur-stable matrix");
    }
    const Eigen::Index n = A.rows();
    const Mat At = A.transpose();
    Mat M = Mat::Identity(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            M.block(i * n, j * n, n, n) -= At(i, j) * At;
        }
    }
    const Vec rhs = Eigen::Map<const Vec>(Qrhs.data(), n * n);
    const Vec sol = M.partialPivLu().solve(rhs);
    Mat P = Eigen::Map<const Mat>(sol.data(), n, n);
    return 0.5 * (P + P.transpose());
}

[[nodiscard]] inline double dlyap_residual(const Mat& A, const Mat& Qrhs, const Mat& P) {
    return (A.transpose() * P * A - P + Qrhs).norm();
}

} // namespace alqr
