#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "alqr/error.hpp"
#include "alqr/excitation.hpp"
#include "alqr/harness.hpp"

namespace alqr {

enum class Format { Csv, Json };

// Column order of the per-trial CSV. Stable; append new columns at the end.
inline constexpr const char* kTrialCsvHeader = "t,cost,regret,state_norm,ec_norm,theta_err";
inline constexpr const char* kSummaryCsvHeader =
    "t,regret_median,regret_p20,regret_p80,state_median,state_p20,state_p80";

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Shortest representation that parses back to the same double.
[[nodiscard]] inline std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

[[nodiscard]] inline double parse_double(std::string_view s) {
    if (s == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (s == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (s == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error(Errc::IoError, "not a number: '" + std::string(s) + "'");
    }
    return v;
}

namespace detail {

inline void ensure_parent(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw Error(Errc::IoError, "cannot create directory '" + path.parent_path().string() + "'");
        }
    }
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
    }
    out << text;
    out.flush();
    if (!out) {
        throw Error(Errc::IoError, "write to '" + path.string() + "' failed");
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::IoError, "cannot read '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t next = line.find(sep, pos);
        out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) {
            return out;
        }
        pos = next + 1;
    }
}

/// Header line plus numeric rows; checks the header and the column count.
inline std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, std::string_view header,
                                                 std::string* header_out = nullptr) {
    const std::string text = read_file(path);
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(Errc::IoError, "'" + path.string() + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (!header.empty() && line != header) {
        throw Error(Errc::IoError, "'" + path.string() + "': unexpected header '" + line + "'");
    }
    if (header_out) {
        *header_out = line;
    }
    const std::size_t cols = split(line, ',').size();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != cols) {
            throw Error(Errc::IoError, "'" + path.string() + "' line " + std::to_string(lineno) + ": expected " +
                                           std::to_string(cols) + " columns");
        }
        std::vector<double> row;
        row.reserve(cols);
        for (const auto f : fields) {
            row.push_back(parse_double(f));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json series_to_json(const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const double x : v) {
        if (std::isfinite(x)) {
            a.push_back(x);
        } else {
            a.push_back(format_double(x));
        }
    }
    return a;
}

inline std::vector<double> series_from_json(const nlohmann::json& a) {
    std::vector<double> v;
    v.reserve(a.size());
    for (const auto& x : a) {
        v.push_back(x.is_string() ? parse_double(x.get<std::string>()) : x.get<double>());
    }
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Trial results
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::string trial_csv(const TrialResult& r) {
    std::string out = kTrialCsvHeader;
    out += '\n';
    const std::size_t T = r.cost.size();
    for (std::size_t t = 0; t < T; ++t) {
        out += std::to_string(t);
        for (const auto* col : {&r.cost, &r.regret, &r.state_norm, &r.ec_norm, &r.theta_err}) {
            out += ',';
            out += format_double(t < col->size() ? (*col)[t] : std::numeric_limits<double>::quiet_NaN());
        }
        out += '\n';
    }
    return out;
}

[[nodiscard]] inline nlohmann::json trial_to_json(const TrialResult& r) {
    nlohmann::json j;
    j["controller"] = r.controller;
    j["seed"] = r.seed;
    j["aborted"] = r.aborted;
    j["abort_step"] = r.abort_step;
    j["abort_reason"] = r.abort_reason;
    j["J_star"] = r.J_star;
    j["skipped_updates"] = r.skipped_updates;
    j["epochs"] = r.epochs;
    j["max_error_model_residual"] = r.max_error_model_residual;
    j["max_identity_residual"] = r.max_identity_residual;
    j["cost"] = detail::series_to_json(r.cost);
    j["regret"] = detail::series_to_json(r.regret);
    j["state_norm"] = detail::series_to_json(r.state_norm);
    j["ec_norm"] = detail::series_to_json(r.ec_norm);
    j["theta_err"] = detail::series_to_json(r.theta_err);
    return j;
}

inline void export_results(const TrialResult& r, const std::filesystem::path& path, Format fmt) {
    detail::write_file(path, fmt == Format::Csv ? trial_csv(r) : trial_to_json(r).dump(1) + "\n");
}

/// Reads a trial file. CSV carries only the per-step series; JSON also
/// restores the scalar metadata.
[[nodiscard]] inline TrialResult import_trial(const std::filesystem::path& path, Format fmt) {
    TrialResult r;
    if (fmt == Format::Csv) {
        for (const auto& row : detail::read_csv(path, kTrialCsvHeader)) {
            r.cost.push_back(row[1]);
            r.regret.push_back(row[2]);
            r.state_norm.push_back(row[3]);
            r.ec_norm.push_back(row[4]);
            r.theta_err.push_back(row[5]);
        }
        return r;
    }
    try {
        const auto j = nlohmann::json::parse(detail::read_file(path));
        r.controller = j.at("controller").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.aborted = j.at("aborted").get<bool>();
        r.abort_step = j.at("abort_step").get<std::size_t>();
        r.abort_reason = j.at("abort_reason").get<std::string>();
        r.J_star = j.at("J_star").get<double>();
        r.skipped_updates = j.at("skipped_updates").get<std::size_t>();
        r.epochs = j.at("epochs").get<std::size_t>();
        r.max_error_model_residual = j.at("max_error_model_residual").get<double>();
        r.max_identity_residual = j.at("max_identity_residual").get<double>();
        r.cost = detail::series_from_json(j.at("cost"));
        r.regret = detail::series_from_json(j.at("regret"));
        r.state_norm = detail::series_from_json(j.at("state_norm"));
        r.ec_norm = detail::series_from_json(j.at("ec_norm"));
        r.theta_err = detail::series_from_json(j.at("theta_err"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::IoError, "'" + path.string() + "': " + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo summaries
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::string summary_csv(const McSummary& s) {
    std::string out = kSummaryCsvHeader;
    out += '\n';
    for (std::size_t t = 0; t < s.steps(); ++t) {
        out += std::to_string(t);
        for (const auto* col :
             {&s.regret_median, &s.regret_p20, &s.regret_p80, &s.state_median, &s.state_p20, &s.state_p80}) {
            out += ',';
            out += format_double((*col)[t]);
        }
        out += '\n';
    }
    return out;
}

[[nodiscard]] inline nlohmann::json summary_to_json(const McSummary& s) {
    nlohmann::json j;
    j["controller"] = s.controller;
    j["trials"] = s.trials;
    j["aborted"] = s.aborted;
    j["config_digest"] = s.config_digest;
    j["final_regret"] = detail::series_to_json(s.final_regret);
    j["regret_median"] = detail::series_to_json(s.regret_median);
    j["regret_p20"] = detail::series_to_json(s.regret_p20);
    j["regret_p80"] = detail::series_to_json(s.regret_p80);
    j["state_median"] = detail::series_to_json(s.state_median);
    j["state_p20"] = detail::series_to_json(s.state_p20);
    j["state_p80"] = detail::series_to_json(s.state_p80);
    return j;
}

inline void export_results(const McSummary& s, const std::filesystem::path& path, Format fmt) {
    detail::write_file(path, fmt == Format::Csv ? summary_csv(s) : summary_to_json(s).dump(1) + "\n");
}

[[nodiscard]] inline McSummary import_summary(const std::filesystem::path& path, Format fmt) {
    McSummary s;
    if (fmt == Format::Csv) {
        for (const auto& row : detail::read_csv(path, kSummaryCsvHeader)) {
            s.regret_median.push_back(row[1]);
            s.regret_p20.push_back(row[2]);
            s.regret_p80.push_back(row[3]);
            s.state_median.push_back(row[4]);
            s.state_p20.push_back(row[5]);
            s.state_p80.push_back(row[6]);
        }
        return s;
    }
    try {
        const auto j = nlohmann::json::parse(detail::read_file(path));
        s.controller = j.at("controller").get<std::string>();
        s.trials = j.at("trials").get<std::size_t>();
        s.aborted = j.at("aborted").get<std::size_t>();
        s.config_digest = j.at("config_digest").get<std::string>();
        s.final_regret = detail::series_from_json(j.at("final_regret"));
        s.regret_median = detail::series_from_json(j.at("regret_median"));
        s.regret_p20 = detail::series_from_json(j.at("regret_p20"));
        s.regret_p80 = detail::series_from_json(j.at("regret_p80"));
        s.state_median = detail::series_from_json(j.at("state_median"));
        s.state_p20 = detail::series_from_json(j.at("state_p20"));
        s.state_p80 = detail::series_from_json(j.at("state_p80"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::IoError, "'" + path.string() + "': " + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Regressor trajectories and excitation reports
// ---------------------------------------------------------------------------

/// Columns: t, phi_0..phi_{d-1}, r_0..r_{m-1} (r columns optional).
inline void export_trajectory(const std::vector<Vec>& phi, const std::vector<Vec>& r, std::size_t offset,
                              const std::filesystem::path& path) {
    std::string out = "t";
    const Eigen::Index d = phi.empty() ? 0 : phi.front().size();
    const Eigen::Index m = r.empty() ? 0 : r.front().size();
    for (Eigen::Index i = 0; i < d; ++i) {
        out += ",phi_" + std::to_string(i);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        out += ",r_" + std::to_string(i);
    }
    out += '\n';
    for (std::size_t s = 0; s < phi.size(); ++s) {
        out += std::to_string(offset + s);
        for (Eigen::Index i = 0; i < d; ++i) {
            out += ',' + format_double(phi[s](i));
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            out += ',' + format_double(r[s](i));
        }
        out += '\n';
    }
    detail::write_file(path, out);
}

struct Trajectory {
    std::size_t offset{0};
    std::vector<Vec> phi;
    std::vector<Vec> r;
};

[[nodiscard]] inline Trajectory import_trajectory(const std::filesystem::path& path) {
    std::string header;
    const auto rows = detail::read_csv(path, "", &header);
    const auto names = detail::split(header, ',');
    if (names.empty() || names.front() != "t") {
        throw Error(Errc::IoError, "'" + path.string() + "': first column must be 't'");
    }
    Eigen::Index d = 0;
    Eigen::Index m = 0;
    for (std::size_t i = 1; i < names.size(); ++i) {
        if (names[i].substr(0, 4) == "phi_") {
            ++d;
        } else if (names[i].substr(0, 2) == "r_") {
            ++m;
        } else {
            throw Error(Errc::IoError, "'" + path.string() + "': unknown column '" + std::string(names[i]) + "'");
        }
    }
    Trajectory tr;
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const auto& row = rows[s];
        if (s == 0) {
            tr.offset = static_cast<std::size_t>(row[0]);
        } else if (static_cast<std::size_t>(row[0]) != tr.offset + s) {
            throw Error(Errc::IoError, "'" + path.string() + "': steps must be consecutive");
        }
        tr.phi.emplace_back(Eigen::Map<const Vec>(row.data() + 1, d));
        if (m > 0) {
            tr.r.emplace_back(Eigen::Map<const Vec>(row.data() + 1 + d, m));
        }
    }
    return tr;
}

[[nodiscard]] inline nlohmann::json report_to_json(const ExcitationReport& rep) {
    auto cvec = [](const CVec& v) {
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            a.push_back({v(i).real(), v(i).imag()});
        }
        return a;
    };
    nlohmann::json j;
    j["window_start"] = rep.window_start;
    j["window_length"] = rep.window_length;
    j["frequencies"] = rep.frequencies;
    j["lambda_min"] = rep.lambda_min;
    nlohmann::json info = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rep.info_matrix.rows(); ++i) {
        std::vector<double> row(rep.info_matrix.cols());
        for (Eigen::Index k = 0; k < rep.info_matrix.cols(); ++k) {
            row[k] = rep.info_matrix(i, k);
        }
        info.push_back(row);
    }
    j["info_matrix"] = info;
    j["amplitudes"] = nlohmann::json::array();
    for (const auto& a : rep.amplitudes) {
        j["amplitudes"].push_back(cvec(a));
    }
    j["has_prediction"] = rep.has_prediction;
    if (rep.has_prediction) {
        j["predicted"] = nlohmann::json::array();
        for (const auto& a : rep.predicted) {
            j["predicted"].push_back(cvec(a));
        }
        j["relative_error"] = rep.relative_error;
        j["predicted_lambda"] = rep.predicted_lambda;
        j["alpha"] = rep.alpha;
        j["bound_holds"] = rep.bound_holds;
    }
    return j;
}

} // namespace alqr
