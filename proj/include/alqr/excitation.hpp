#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "alqr/control_math.hpp"
#include "alqr/error.hpp"

namespace alqr {

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Closed loop x' = A_K x + B r with u = K x + r.
struct ClosedLoop {
    Mat A_K;
    Mat B;
    Mat K;
};

struct ExcitationReport {
    std::size_t window_start{0};
    std::size_t window_length{0};
    std::vector<double> frequencies;
    std::vector<CVec> amplitudes; // (1/T0) sum phi_t e^{-i w t}
    Mat info_matrix;              // (1/T0) sum phi phi'
    double lambda_min{0.0};
    // present when a closed loop and the input trajectory were given
    bool has_prediction{false};
    std::vector<CVec> r_amplitudes;
    std::vector<CVec> predicted;
    std::vector<double> relative_error;
    CMat expected_info; // columns: predicted lines at +w_i and -w_i
    double predicted_lambda{0.0}; // lambda_min(Phi Phi^H)
    double alpha{0.0};            // d * predicted_lambda
    bool bound_holds{false};      // lambda_min >= alpha / d
};

/// (1/T0) sum_{t in window} v_t e^{-i w t}, with t the absolute step index.
[[nodiscard]] inline CVec dft_amplitude(const std::vector<Vec>& traj, std::size_t offset, std::size_t start,
                                        std::size_t length, double omega) {
    const Eigen::Index d = traj.empty() ? 0 : traj.front().size();
    CVec acc = CVec::Zero(d);
    for (std::size_t s = 0; s < length; ++s) {
        const std::size_t t = start + s;
        const std::complex<double> e = std::polar(1.0, -omega * static_cast<double>(t));
        acc += traj[t - offset].cast<std::complex<double>>() * e;
    }
    return acc / static_cast<double>(length);
}

/// phi_bar = [-G; K G + I] r_bar with G = (e^{iw} I - A_K)^-1 B, for
/// phi = [-x; u].
[[nodiscard]] inline CVec predicted_amplitude(const ClosedLoop& cl, double omega, const CVec& r_bar) {
    const Eigen::Index n = cl.A_K.rows();
    const Eigen::Index m = cl.B.cols();
    const CMat M = std::polar(1.0, omega) * CMat::Identity(n, n) - cl.A_K.cast<std::complex<double>>();
    const CMat G = M.partialPivLu().solve(cl.B.cast<std::complex<double>>());
    CVec out(n + m);
    out.head(n) = -(G * r_bar);
    out.tail(m) = cl.K.cast<std::complex<double>>() * (G * r_bar) + r_bar;
    return out;
}

/// Spectral-line analysis of a regressor window. `phi` (and `r`, if given)
/// hold samples starting at absolute step `offset`.
[[nodiscard]] inline ExcitationReport analyze_excitation(const std::vector<Vec>& phi, std::size_t offset,
                                                         std::size_t window_start, std::size_t window_length,
                                                         const std::vector<double>& frequencies,
                                                         const std::optional<ClosedLoop>& loop = std::nullopt,
                                                         const std::vector<Vec>* r = nullptr) {
    if (phi.empty()) {
        throw Error(Errc::DimensionMismatch, "analyze_excitation: empty trajectory");
    }
    const Eigen::Index d = phi.front().size();
    if (window_length < static_cast<std::size_t>(2 * d)) {
        throw Error(Errc::WindowTooShort, "window of " + std::to_string(window_length) + " steps is shorter than 2d = " +
                                              std::to_string(2 * d));
    }
    if (window_start < offset || window_start + window_length > offset + phi.size()) {
        throw Error(Errc::DimensionMismatch, "analyze_excitation: window lies outside the trajectory");
    }

    ExcitationReport rep;
    rep.window_start = window_start;
    rep.window_length = window_length;
    rep.frequencies = frequencies;
    rep.info_matrix = Mat::Zero(d, d);
    for (std::size_t s = 0; s < window_length; ++s) {
        const Vec& v = phi[window_start + s - offset];
        rep.info_matrix.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
    rep.info_matrix = rep.info_matrix.selfadjointView<Eigen::Lower>();
    rep.info_matrix /= static_cast<double>(window_length);
    rep.lambda_min = Eigen::SelfAdjointEigenSolver<Mat>(rep.info_matrix, Eigen::EigenvaluesOnly).eigenvalues()(0);
    for (const double w : frequencies) {
        rep.amplitudes.push_back(dft_amplitude(phi, offset, window_start, window_length, w));
    }

    if (loop && r != nullptr) {
        if (r->size() != phi.size()) {
            throw Error(Errc::DimensionMismatch, "analyze_excitation: r and phi trajectories differ in length");
        }
        if (loop->A_K.rows() + loop->B.cols() != d) {
            throw Error(Errc::DimensionMismatch, "analyze_excitation: closed loop does not match phi");
        }
        rep.has_prediction = true;
        rep.expected_info = CMat::Zero(d, static_cast<Eigen::Index>(2 * frequencies.size()));
        for (std::size_t i = 0; i < frequencies.size(); ++i) {
            const CVec rb = dft_amplitude(*r, offset, window_start, window_length, frequencies[i]);
            const CVec pred = predicted_amplitude(*loop, frequencies[i], rb);
            rep.r_amplitudes.push_back(rb);
            rep.predicted.push_back(pred);
            const double denom = pred.norm();
            rep.relative_error.push_back(denom > 0.0 ? (rep.amplitudes[i] - pred).norm() / denom
                                                     : rep.amplitudes[i].norm());
            rep.expected_info.col(static_cast<Eigen::Index>(2 * i)) = pred;
            rep.expected_info.col(static_cast<Eigen::Index>(2 * i + 1)) = pred.conjugate();
        }
        const Mat gram = (rep.expected_info * rep.expected_info.adjoint()).real();
        rep.predicted_lambda = Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues()(0);
        rep.alpha = static_cast<double>(d) * rep.predicted_lambda;
        rep.bound_holds = rep.lambda_min >= rep.alpha / static_cast<double>(d);
    }
    return rep;
}

} // namespace alqr
