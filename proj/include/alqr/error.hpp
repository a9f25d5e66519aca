#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alqr {

enum class Errc {
    NonConvergence,
    IllConditioned,
    UnstableMatrix,
    DimensionMismatch,
    RankDeficient,
    NumericalBreakdown,
    SingularThetaB,
    IdentityViolation,
    InvalidLOE,
    ConfigError,
    IoError,
    WindowTooShort,
};

[[nodiscard]] constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::IllConditioned: return "IllConditioned";
    case Errc::UnstableMatrix: return "UnstableMatrix";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NumericalBreakdown: return "NumericalBreakdown";
    case Errc::SingularThetaB: return "SingularThetaB";
    case Errc::IdentityViolation: return "IdentityViolation";
    case Errc::InvalidLOE: return "InvalidLOE";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    case Errc::WindowTooShort: return "WindowTooShort";
    }
    return "Unknown";
}

// Every failure in the library is reported through this one exception type;
// callers branch on code().
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace alqr
