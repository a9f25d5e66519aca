#pragma once

#include "alqr/control_math.hpp"
#include "alqr/error.hpp"

namespace alqr {

/// Fixed pair (A_m0, B_m) plus the epoch-indexed target A_mk.
struct ReferenceModel {
    Mat A_m0;
    Mat B_m;
    Mat A_mk;
    Mat B_m_pinv; // (B_m' B_m)^-1 B_m'
};

[[nodiscard]] inline ReferenceModel make_reference_model(const Mat& A_m, const Mat& B_m) {
    if (A_m.rows() != A_m.cols() || B_m.rows() != A_m.rows()) {
        throw Error(Errc::DimensionMismatch, "reference model: A_m must be n x n and B_m n x m");
    }
    const Mat G = B_m.transpose() * B_m;
    Eigen::LDLT<Mat> ldlt(G);
    const double scale = std::max(1e-300, G.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-12 * scale) {
        throw Error(Errc::RankDeficient, "B_m must have full column rank");
    }
    return {A_m, B_m, A_m, ldlt.solve(B_m.transpose())};
}

} // namespace alqr
