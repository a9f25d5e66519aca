#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alqr/config.hpp"
#include "alqr/error.hpp"
#include "alqr/excitation.hpp"
#include "alqr/harness.hpp"
#include "alqr/io.hpp"
#include "alqr/plot.hpp"

namespace alqr {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitWindow = 4;

struct CommonFlags {
    std::string config;
    std::string preset;
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> parallelism;
    bool dry_run{false};
};

namespace detail {

inline void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "experiment config (JSON)");
    cmd->add_option("--preset", f.preset, "named scenario preset");
    cmd->add_option("--trials", f.trials, "number of trials");
    cmd->add_option("--seed", f.seed, "base seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--parallelism", f.parallelism, "worker threads");
    cmd->add_flag("--dry-run", f.dry_run, "validate and print the effective config");
}

/// Config from flags: file, then preset, then individual overrides.
inline ExperimentConfig gather_config(const CommonFlags& f) {
    if (!f.config.empty() && !f.preset.empty()) {
        throw Error(Errc::ConfigError, "use either --config or --preset, not both");
    }
    ExperimentConfig cfg;
    if (!f.config.empty()) {
        cfg = load_config(f.config);
    } else if (!f.preset.empty()) {
        cfg = preset_config(f.preset);
    }
    if (f.trials) {
        cfg.trials = *f.trials;
    }
    if (f.seed) {
        cfg.seed = *f.seed;
    }
    if (f.parallelism) {
        cfg.parallelism = *f.parallelism;
    }
    if (!f.out.empty()) {
        cfg.output_dir = f.out;
    } else if (const char* env = std::getenv("ALQR_OUT_DIR"); env != nullptr && *env != '\0') {
        cfg.output_dir = (std::filesystem::path(env) / (cfg.preset.empty() ? "experiment" : cfg.preset)).string();
    }
    return cfg;
}

/// Validates, resolves and echoes the effective config. Returns nullopt on
/// a dry run.
inline std::optional<ExperimentConfig> prepare(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = gather_config(f);
    for (const auto& w : validate_config(cfg)) {
        err << "warning: " << w << "\n";
    }
    const ExperimentConfig resolved = resolve_defaults(cfg);
    if (f.dry_run) {
        out << config_to_json(resolved).dump(2) << "\n";
        return std::nullopt;
    }
    write_file(std::filesystem::path(resolved.output_dir) / "config.json", config_to_json(resolved).dump(2) + "\n");
    return resolved;
}

inline Mat matrix_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) {
        throw Error(Errc::ConfigError, std::string("field '") + what + "' must be a nested array");
    }
    Mat M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.front().size()));
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        if (j[i].size() != static_cast<std::size_t>(M.cols())) {
            throw Error(Errc::ConfigError, std::string("field '") + what + "' has ragged rows");
        }
        for (Eigen::Index k = 0; k < M.cols(); ++k) {
            M(i, k) = j[i][k].get<double>();
        }
    }
    return M;
}

inline std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    for (const auto part : split(s, ',')) {
        if (!part.empty()) {
            try {
                out.push_back(parse_double(part));
            } catch (const Error&) {
                throw Error(Errc::ConfigError, "field '--frequencies' must be a comma-separated list of numbers");
            }
        }
    }
    return out;
}

} // namespace detail

inline int cmd_run(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    const auto cfg = detail::prepare(f, out, err);
    if (!cfg) {
        return kExitOk;
    }
    const std::filesystem::path dir = std::filesystem::path(cfg->output_dir) / "trials";
    for (const auto& c : cfg->controllers) {
        err << "run: " << c << ", " << cfg->trials << " trial(s)\n";
        const auto trials = run_trials(*cfg, c, cfg->trials, cfg->parallelism);
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const std::string stem = c + "_" + std::to_string(i);
            export_results(trials[i], dir / (stem + ".csv"), Format::Csv);
            export_results(trials[i], dir / (stem + ".json"), Format::Json);
            if (cfg->record_regressor && !trials[i].phi_trace.empty()) {
                export_trajectory(trials[i].phi_trace, trials[i].r_trace, 0, dir / (stem + "_phi.csv"));
            }
            if (trials[i].aborted) {
                err << "  trial " << i << " aborted at step " << trials[i].abort_step << ": "
                    << trials[i].abort_reason << "\n";
            }
        }
    }
    out << "wrote " << dir.string() << "\n";
    return kExitOk;
}

inline int cmd_compare(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    const auto cfg = detail::prepare(f, out, err);
    if (!cfg) {
        return kExitOk;
    }
    const std::filesystem::path dir(cfg->output_dir);
    const std::string digest = config_digest(*cfg);
    std::vector<McSummary> all;
    for (const auto& c : cfg->controllers) {
        err << "compare: " << c << ", " << cfg->trials << " trial(s)\n";
        McSummary s = summarize_trials(run_trials(*cfg, c, cfg->trials, cfg->parallelism), cfg->horizon);
        s.controller = c;
        s.config_digest = digest;
        export_results(s, dir / ("summary_" + c + ".csv"), Format::Csv);
        export_results(s, dir / ("summary_" + c + ".json"), Format::Json);
        out << c << ": median final regret " << format_double(percentile(s.final_regret, 0.5)) << ", aborted "
            << s.aborted << "/" << s.trials << "\n";
        all.push_back(std::move(s));
    }
    const std::string title = cfg->preset.empty() ? cfg->system.name : cfg->preset;
    PlotOptions po;
    po.title = title + " regret";
    emit_plot(all, dir / "regret.svg", po);
    po.metric = PlotMetric::StateNorm;
    po.log_y = true;
    po.title = title + " state norm";
    emit_plot(all, dir / "state_norm.svg", po);
    out << "wrote " << dir.string() << "\n";
    return kExitOk;
}

struct AnalyzeFlags {
    std::string trajectory;
    std::size_t window_start{0};
    std::optional<std::size_t> window_length;
    std::string frequencies;
    std::string loop;
    std::string out;
};

/// Loop file: {"A_K": [[..]], "B": [[..]], "K": [[..]]}.
inline int cmd_analyze(const AnalyzeFlags& f, std::ostream& out, std::ostream&) {
    const Trajectory tr = import_trajectory(f.trajectory);
    if (tr.phi.empty()) {
        throw Error(Errc::IoError, "trajectory '" + f.trajectory + "' has no rows");
    }
    const std::size_t start = std::max(f.window_start, tr.offset);
    const std::size_t length = f.window_length.value_or(tr.offset + tr.phi.size() - start);
    std::vector<double> freqs = detail::parse_list(f.frequencies);
    if (freqs.empty()) {
        const Eigen::Index d = tr.phi.front().size();
        const Eigen::Index m = tr.r.empty() ? d / 2 : tr.r.front().size();
        freqs = default_frequencies(d - m, m);
    }
    std::optional<ClosedLoop> loop;
    if (!f.loop.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(detail::read_file(f.loop));
            loop = ClosedLoop{detail::matrix_from_json(j.at("A_K"), "A_K"), detail::matrix_from_json(j.at("B"), "B"),
                              detail::matrix_from_json(j.at("K"), "K")};
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ConfigError, "loop file '" + f.loop + "': " + e.what());
        }
    }
    const ExcitationReport rep =
        analyze_excitation(tr.phi, tr.offset, start, length, freqs, loop, tr.r.empty() ? nullptr : &tr.r);
    const std::string text = report_to_json(rep).dump(2) + "\n";
    if (f.out.empty()) {
        out << text;
    } else {
        detail::write_file(f.out, text);
        out << "wrote " << f.out << "\n";
    }
    return kExitOk;
}

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"MRAC-LQR adaptive control experiments", "alqr"};
    app.require_subcommand(1);
    CommonFlags run_flags;
    CommonFlags cmp_flags;
    AnalyzeFlags an_flags;
    auto* run = app.add_subcommand("run", "run individual trials and write per-trial results");
    detail::add_common(run, run_flags);
    auto* cmp = app.add_subcommand("compare", "Monte Carlo comparison of all configured controllers");
    detail::add_common(cmp, cmp_flags);
    auto* an = app.add_subcommand("analyze", "spectral-line analysis of a regressor trajectory");
    an->add_option("--trajectory", an_flags.trajectory, "trajectory CSV (t, phi_*, r_*)")->required();
    an->add_option("--window-start", an_flags.window_start, "first step of the window");
    an->add_option("--window-length", an_flags.window_length, "window length T0");
    an->add_option("--frequencies", an_flags.frequencies, "comma-separated frequencies in (0, pi)");
    an->add_option("--loop", an_flags.loop, "closed-loop JSON with A_K, B, K for predictions");
    an->add_option("--out", an_flags.out, "report path (default: stdout)");
    auto* presets = app.add_subcommand("presets", "list scenario presets");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*run) {
            return cmd_run(run_flags, out, err);
        }
        if (*cmp) {
            return cmd_compare(cmp_flags, out, err);
        }
        if (*an) {
            return cmd_analyze(an_flags, out, err);
        }
        if (*presets) {
            for (const auto& p : preset_names()) {
                out << p << "\n";
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.code()) {
        case Errc::ConfigError: return kExitConfig;
        case Errc::IoError: return kExitIo;
        case Errc::WindowTooShort: return kExitWindow;
        default: return kExitFailure;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace alqr
