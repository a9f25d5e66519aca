#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "alqr/error.hpp"
#include "alqr/estimator.hpp"
#include "alqr/mrac.hpp"
#include "alqr/rng.hpp"
#include "alqr/systems.hpp"

namespace alqr {

using json = nlohmann::ordered_json;

struct SystemConfig {
    std::string name{"laplacian"};
    // laplacian
    std::string init{"unstable"};
    double perturbation_scale{1.0};
    double unstable_estimate_scale{0.0};
    // quadrotor
    double dt{0.01};
    std::vector<double> epsilon{0.5, 1.0, 1.0, 1.0};
    // shared
    double sigma_w{0.1};
    std::vector<double> x0{}; // empty: zero initial state
};

struct CostConfig {
    double q_scale{10.0};
    double r_scale{1.0};
};

struct ExplorationSpec {
    std::string mode{"gaussian"};
    double sigma_explore{0.1};
    double C_r{0.1};
    double decay_exponent{1.0 / 6.0};
    std::vector<double> frequencies{}; // empty: default grid for the system size
};

struct EpochSpec {
    std::string schedule{"linear"};
    std::size_t C_T{500};
};

struct EstimatorSpec {
    double gamma{0.5};
    double sigma0{10.0};
    std::size_t resync_every{1000};
    std::string theta0{"prior"}; // "prior" | "center" | "truth"
    std::optional<double> a_max{};
    std::string b_kind{"diagonal_box"}; // "diagonal_box" | "frobenius_ball"
    std::optional<double> b_min{};
    std::optional<double> b_max{};
    std::vector<double> b_signs{};
    std::optional<double> b_radius{};
};

struct ExperimentConfig {
    std::string preset{};
    SystemConfig system{};
    std::vector<std::string> controllers{"optimal", "ce", "mrac_lqr"};
    CostConfig cost{};
    ExplorationSpec exploration{};
    EpochSpec epochs{};
    EstimatorSpec estimator{};
    std::size_t horizon{20000};
    std::size_t trials{100};
    std::uint64_t seed{1};
    std::string output_dir{"out"};
    std::size_t parallelism{1};
    double blowup_threshold{1e7};
    bool check_identities{true};
    bool record_regressor{false};
};

// ---------------------------------------------------------------------------
// JSON <-> config
// ---------------------------------------------------------------------------

namespace detail {

// Reads fields from one JSON object and rejects keys nobody asked for.
class StrictSection {
public:
    StrictSection(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw Error(Errc::ConfigError, "field '" + path_ + "' must be an object");
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(Errc::ConfigError, "field '" + field(key) + "' has the wrong type");
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) {
            return;
        }
        try {
            out = j_.at(key).template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(Errc::ConfigError, "field '" + field(key) + "' has the wrong type");
        }
    }

    [[nodiscard]] const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.contains(item.key())) {
                throw Error(Errc::ConfigError, "unknown field '" + field(item.key()) + "'");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace detail

ExperimentConfig preset_config(const std::string& name);

/// Parses a config document. A "preset" key seeds every default from that
/// preset before the remaining fields are applied.
[[nodiscard]] inline ExperimentConfig config_from_json(const json& j) {
    detail::StrictSection top(j, "");
    ExperimentConfig cfg;
    std::string preset;
    top.get("preset", preset);
    if (!preset.empty()) {
        cfg = preset_config(preset);
    }
    if (const json* s = top.child("system")) {
        detail::StrictSection sec(*s, "system");
        auto& c = cfg.system;
        sec.get("name", c.name);
        sec.get("init", c.init);
        sec.get("perturbation_scale", c.perturbation_scale);
        sec.get("unstable_estimate_scale", c.unstable_estimate_scale);
        sec.get("dt", c.dt);
        sec.get("epsilon", c.epsilon);
        sec.get("sigma_w", c.sigma_w);
        sec.get("x0", c.x0);
        sec.finish();
    }
    top.get("controllers", cfg.controllers);
    if (const json* s = top.child("cost")) {
        detail::StrictSection sec(*s, "cost");
        sec.get("q_scale", cfg.cost.q_scale);
        sec.get("r_scale", cfg.cost.r_scale);
        sec.finish();
    }
    if (const json* s = top.child("exploration")) {
        detail::StrictSection sec(*s, "exploration");
        auto& e = cfg.exploration;
        sec.get("mode", e.mode);
        sec.get("sigma_explore", e.sigma_explore);
        sec.get("C_r", e.C_r);
        sec.get("decay_exponent", e.decay_exponent);
        sec.get("frequencies", e.frequencies);
        sec.finish();
    }
    if (const json* s = top.child("epochs")) {
        detail::StrictSection sec(*s, "epochs");
        sec.get("schedule", cfg.epochs.schedule);
        sec.get("C_T", cfg.epochs.C_T);
        sec.finish();
    }
    if (const json* s = top.child("estimator")) {
        detail::StrictSection sec(*s, "estimator");
        auto& e = cfg.estimator;
        sec.get("gamma", e.gamma);
        sec.get("sigma0", e.sigma0);
        sec.get("resync_every", e.resync_every);
        sec.get("theta0", e.theta0);
        sec.get("a_max", e.a_max);
        sec.get("b_kind", e.b_kind);
        sec.get("b_min", e.b_min);
        sec.get("b_max", e.b_max);
        sec.get("b_signs", e.b_signs);
        sec.get("b_radius", e.b_radius);
        sec.finish();
    }
    top.get("horizon", cfg.horizon);
    top.get("trials", cfg.trials);
    top.get("seed", cfg.seed);
    top.get("output_dir", cfg.output_dir);
    top.get("parallelism", cfg.parallelism);
    top.get("blowup_threshold", cfg.blowup_threshold);
    top.get("check_identities", cfg.check_identities);
    top.get("record_regressor", cfg.record_regressor);
    top.finish();
    cfg.preset = preset;
    return cfg;
}

[[nodiscard]] inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    if (!cfg.preset.empty()) {
        j["preset"] = cfg.preset;
    }
    const auto& s = cfg.system;
    j["system"] = {{"name", s.name},       {"init", s.init},   {"perturbation_scale", s.perturbation_scale},
                   {"unstable_estimate_scale", s.unstable_estimate_scale},
                   {"dt", s.dt},           {"epsilon", s.epsilon}, {"sigma_w", s.sigma_w},
                   {"x0", s.x0}};
    j["controllers"] = cfg.controllers;
    j["cost"] = {{"q_scale", cfg.cost.q_scale}, {"r_scale", cfg.cost.r_scale}};
    const auto& e = cfg.exploration;
    j["exploration"] = {{"mode", e.mode},
                        {"sigma_explore", e.sigma_explore},
                        {"C_r", e.C_r},
                        {"decay_exponent", e.decay_exponent},
                        {"frequencies", e.frequencies}};
    j["epochs"] = {{"schedule", cfg.epochs.schedule}, {"C_T", cfg.epochs.C_T}};
    const auto& est = cfg.estimator;
    json je = {{"gamma", est.gamma},   {"sigma0", est.sigma0}, {"resync_every", est.resync_every},
               {"theta0", est.theta0}, {"b_kind", est.b_kind}, {"b_signs", est.b_signs}};
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) {
            je[key] = *v;
        } else {
            je[key] = nullptr;
        }
    };
    put("a_max", est.a_max);
    put("b_min", est.b_min);
    put("b_max", est.b_max);
    put("b_radius", est.b_radius);
    j["estimator"] = je;
    j["horizon"] = cfg.horizon;
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["parallelism"] = cfg.parallelism;
    j["blowup_threshold"] = cfg.blowup_threshold;
    j["check_identities"] = cfg.check_identities;
    j["record_regressor"] = cfg.record_regressor;
    return j;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::IoError, "cannot read config '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::ConfigError, std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

/// 64-bit FNV-1a over the canonical (resolved) JSON dump.
[[nodiscard]] inline std::string config_digest(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << std::hex << fnv1a64(config_to_json(cfg).dump());
    std::string h = os.str();
    return std::string(16 - h.size(), '0') + h;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const char* init : {"stable", "unstable"}) {
        for (const char* mode : {"gaussian", "sinusoidal"}) {
            for (const char* level : {"", "-0.01"}) {
                out.push_back(std::string("laplacian-") + init + "-" + mode + level);
            }
        }
    }
    out.emplace_back("quadrotor-low-noise");
    out.emplace_back("quadrotor-high-noise");
    return out;
}

inline ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.preset = name;
    if (name.rfind("laplacian-", 0) == 0) {
        std::string rest = name.substr(10);
        double level = 0.1;
        if (rest.size() > 5 && rest.substr(rest.size() - 5) == "-0.01") {
            level = 0.01;
            rest.resize(rest.size() - 5);
        }
        const auto dash = rest.find('-');
        if (dash != std::string::npos) {
            const std::string init = rest.substr(0, dash);
            const std::string mode = rest.substr(dash + 1);
            if ((init == "stable" || init == "unstable") && (mode == "gaussian" || mode == "sinusoidal")) {
                cfg.system.name = "laplacian";
                cfg.system.init = init;
                cfg.system.sigma_w = 0.1;
                cfg.exploration.mode = mode;
                cfg.exploration.sigma_explore = level;
                cfg.exploration.C_r = level;
                return cfg;
            }
        }
    } else if (name == "quadrotor-low-noise" || name == "quadrotor-high-noise") {
        const double level = name == "quadrotor-low-noise" ? 0.01 : 0.1;
        cfg.system.name = "quadrotor";
        cfg.system.sigma_w = level;
        cfg.exploration.mode = "gaussian";
        cfg.exploration.sigma_explore = level;
        cfg.exploration.C_r = level;
        return cfg;
    }
    std::string list;
    for (const auto& p : preset_names()) {
        list += (list.empty() ? "" : ", ") + p;
    }
    throw Error(Errc::ConfigError, "unknown preset '" + name + "'; available: " + list);
}

// ---------------------------------------------------------------------------
// Validation and resolution
// ---------------------------------------------------------------------------

[[nodiscard]] inline ScheduleMode schedule_mode(const ExperimentConfig& cfg) {
    if (cfg.epochs.schedule == "linear") {
        return ScheduleMode::Linear;
    }
    if (cfg.epochs.schedule == "exponential") {
        return ScheduleMode::Exponential;
    }
    throw Error(Errc::ConfigError, "field 'epochs.schedule' must be 'linear' or 'exponential'");
}

[[nodiscard]] inline ExplorationMode exploration_mode(const ExperimentConfig& cfg) {
    const auto& m = cfg.exploration.mode;
    if (m == "off") {
        return ExplorationMode::Off;
    }
    if (m == "gaussian") {
        return ExplorationMode::Gaussian;
    }
    if (m == "sinusoidal") {
        return ExplorationMode::Sinusoidal;
    }
    throw Error(Errc::ConfigError, "field 'exploration.mode' must be 'off', 'gaussian' or 'sinusoidal'");
}

/// System for one trial. The stable Laplacian draws its prior perturbation
/// from the trial seed.
[[nodiscard]] inline SystemSetup build_system(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
    const auto& s = cfg.system;
    if (!(s.sigma_w >= 0.0)) {
        throw Error(Errc::ConfigError, "field 'system.sigma_w' must be nonnegative");
    }
    if (s.name == "laplacian") {
        LaplacianOptions o;
        if (s.init == "stable") {
            o.init = LaplacianInit::Stable;
        } else if (s.init == "unstable") {
            o.init = LaplacianInit::Unstable;
        } else {
            throw Error(Errc::ConfigError, "field 'system.init' must be 'stable' or 'unstable'");
        }
        if (!(s.perturbation_scale >= 0.0 && s.perturbation_scale <= 1.0)) {
            throw Error(Errc::ConfigError, "field 'system.perturbation_scale' must lie in [0, 1]");
        }
        o.perturbation_scale = s.perturbation_scale;
        o.unstable_estimate_scale = s.unstable_estimate_scale;
        o.sigma_w = s.sigma_w;
        o.q_scale = cfg.cost.q_scale;
        o.r_scale = cfg.cost.r_scale;
        return make_laplacian(o, derive_seed(trial_seed, "system"));
    }
    if (s.name == "quadrotor") {
        QuadrotorOptions o;
        o.dt = s.dt;
        if (s.epsilon.size() != 4) {
            throw Error(Errc::ConfigError, "field 'system.epsilon' must have 4 entries");
        }
        o.epsilon = Eigen::Map<const Vec>(s.epsilon.data(), 4);
        o.sigma_w = s.sigma_w;
        o.q_scale = cfg.cost.q_scale;
        o.r_scale = cfg.cost.r_scale;
        try {
            return make_quadrotor(o);
        } catch (const Error& e) {
            if (e.code() == Errc::InvalidLOE) {
                throw Error(Errc::ConfigError, "field 'system.epsilon': " + std::string(e.what()));
            }
            throw;
        }
    }
    throw Error(Errc::ConfigError, "field 'system.name' must be 'laplacian' or 'quadrotor'");
}

/// Fills every optional field with its system-dependent default.
[[nodiscard]] inline ExperimentConfig resolve_defaults(ExperimentConfig cfg) {
    const SystemSetup sys = build_system(cfg, cfg.seed);
    const Eigen::Index n = sys.plant.n();
    const Eigen::Index m = sys.plant.m();
    auto& est = cfg.estimator;
    const bool quad = cfg.system.name == "quadrotor";
    if (!est.a_max) {
        est.a_max = quad ? 2.0 * sys.matched.Theta_A_star.norm() : 4.0;
    }
    if (est.b_signs.empty()) {
        est.b_signs.assign(static_cast<std::size_t>(m), 1.0);
    }
    if (est.b_kind == "diagonal_box") {
        if (!est.b_min) {
            est.b_min = quad ? 0.1 : 0.5;
        }
        if (!est.b_max) {
            est.b_max = quad ? 1.5 : 2.0;
        }
    } else if (est.b_kind == "frobenius_ball") {
        if (!est.b_radius) {
            est.b_radius = 0.5 * std::sqrt(static_cast<double>(m)) * 0.9;
        }
    }
    if (cfg.exploration.frequencies.empty() && cfg.exploration.mode == "sinusoidal") {
        cfg.exploration.frequencies = default_frequencies(n, m);
    }
    if (cfg.system.x0.empty()) {
        cfg.system.x0.assign(static_cast<std::size_t>(n), 0.0);
    }
    return cfg;
}

/// Parameter set described by a resolved config.
[[nodiscard]] inline ParamSet build_param_set(const ExperimentConfig& cfg, Eigen::Index m) {
    const auto& est = cfg.estimator;
    ParamSet set;
    set.a.radius = est.a_max.value_or(4.0);
    if (est.b_kind == "diagonal_box") {
        Vec signs = Vec::Ones(m);
        if (!est.b_signs.empty()) {
            if (static_cast<Eigen::Index>(est.b_signs.size()) != m) {
                throw Error(Errc::ConfigError, "field 'estimator.b_signs' must have one entry per input");
            }
            signs = Eigen::Map<const Vec>(est.b_signs.data(), m);
        }
        try {
            set.b = make_diagonal_box(est.b_min.value_or(0.5), est.b_max.value_or(2.0), signs);
        } catch (const Error&) {
            throw Error(Errc::ConfigError, "fields 'estimator.b_min'/'estimator.b_max' need 0 < b_min <= b_max");
        }
    } else if (est.b_kind == "frobenius_ball") {
        // Ball around the identity (scaled by signs); radius below 1 keeps
        // every member invertible.
        Vec signs = Vec::Ones(m);
        if (!est.b_signs.empty()) {
            signs = Eigen::Map<const Vec>(est.b_signs.data(), m);
        }
        const double radius = est.b_radius.value_or(0.5);
        if (!(radius > 0.0 && radius < 1.0)) {
            throw Error(Errc::ConfigError, "field 'estimator.b_radius' must lie in (0, 1)");
        }
        set.b = FrobeniusBall{radius, Mat(signs.asDiagonal())};
    } else {
        throw Error(Errc::ConfigError, "field 'estimator.b_kind' must be 'diagonal_box' or 'frobenius_ball'");
    }
    return set;
}

/// Checks every precondition the simulation relies on. Returns warnings
/// (e.g. the true parameter sitting on the boundary of the declared set).
inline std::vector<std::string> validate_config(const ExperimentConfig& raw) {
    std::vector<std::string> warnings;
    if (raw.controllers.empty()) {
        throw Error(Errc::ConfigError, "field 'controllers' must list at least one controller");
    }
    for (const auto& c : raw.controllers) {
        if (c != "optimal" && c != "ce" && c != "mrac_lqr") {
            throw Error(Errc::ConfigError, "field 'controllers': unknown controller '" + c + "'");
        }
    }
    if (raw.horizon < 1) {
        throw Error(Errc::ConfigError, "field 'horizon' must be positive");
    }
    if (raw.trials < 1) {
        throw Error(Errc::ConfigError, "field 'trials' must be positive");
    }
    if (raw.parallelism < 1) {
        throw Error(Errc::ConfigError, "field 'parallelism' must be positive");
    }
    if (!(raw.blowup_threshold > 0.0)) {
        throw Error(Errc::ConfigError, "field 'blowup_threshold' must be positive");
    }
    if (!(raw.cost.q_scale >= 0.0) || !(raw.cost.r_scale > 0.0)) {
        throw Error(Errc::ConfigError, "fields 'cost.q_scale' >= 0 and 'cost.r_scale' > 0 required");
    }
    if (raw.epochs.C_T < 1) {
        throw Error(Errc::ConfigError, "field 'epochs.C_T' must be at least 1");
    }
    (void)schedule_mode(raw);
    const ExplorationMode mode = exploration_mode(raw);
    const auto& e = raw.exploration;
    if (!(e.sigma_explore >= 0.0) || !(e.C_r >= 0.0) || !(e.decay_exponent >= 0.0)) {
        throw Error(Errc::ConfigError, "fields 'exploration.sigma_explore', 'C_r', 'decay_exponent' must be >= 0");
    }
    if (!(raw.estimator.gamma > 0.0)) {
        throw Error(Errc::ConfigError, "field 'estimator.gamma' must be positive");
    }
    if (!(raw.estimator.sigma0 > 0.0)) {
        throw Error(Errc::ConfigError, "field 'estimator.sigma0' must be positive");
    }
    if (raw.estimator.theta0 != "prior" && raw.estimator.theta0 != "center" && raw.estimator.theta0 != "truth") {
        throw Error(Errc::ConfigError, "field 'estimator.theta0' must be 'prior', 'center' or 'truth'");
    }

    const ExperimentConfig cfg = resolve_defaults(raw);
    const SystemSetup sys = build_system(cfg, cfg.seed);
    const Eigen::Index n = sys.plant.n();
    const Eigen::Index m = sys.plant.m();
    if (static_cast<Eigen::Index>(cfg.system.x0.size()) != n) {
        throw Error(Errc::ConfigError, "field 'system.x0' must have " + std::to_string(n) + " entries");
    }
    if (mode == ExplorationMode::Sinusoidal) {
        ExplorationConfig ec;
        ec.mode = mode;
        ec.frequencies = cfg.exploration.frequencies;
        try {
            validate_exploration(ec, n, m);
        } catch (const Error& err) {
            throw Error(Errc::ConfigError, "field 'exploration.frequencies': " + std::string(err.what()));
        }
    }
    const ParamSet set = build_param_set(cfg, m);
    const Mat theta_star = sys.matched.theta_star();
    const double slack = set_slack(set, theta_star, n);
    if (slack < 0.0 || offdiagonal_violation(set, theta_star) > 0.0) {
        throw Error(Errc::ConfigError, "true parameters lie outside the declared 'estimator' parameter set");
    }
    if (slack <= 1e-9) {
        warnings.emplace_back("true parameters lie on the boundary of the parameter set; convergence of the "
                              "projection is not guaranteed");
    }
    if (spectral_radius(sys.matched.A_m) >= 1.0) {
        throw Error(Errc::ConfigError, "reference model A_m is not Schur stable");
    }
    return warnings;
}

} // namespace alqr
