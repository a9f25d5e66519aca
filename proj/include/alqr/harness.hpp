#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "alqr/baselines.hpp"
#include "alqr/config.hpp"
#include "alqr/control_math.hpp"
#include "alqr/estimator.hpp"
#include "alqr/mrac.hpp"
#include "alqr/reference_model.hpp"
#include "alqr/rng.hpp"
#include "alqr/systems.hpp"

namespace alqr {

/// J* = trace(P* sigma_w^2 I), the steady-state cost of u = K* x.
[[nodiscard]] inline double optimal_average_cost(const PlantModel& plant, const Mat& Q, const Mat& R) {
    const DareSolution sol = solve_dare(plant.A_star, plant.B_star, Q, R);
    return sol.P.trace() * plant.sigma_w * plant.sigma_w;
}

// ---------------------------------------------------------------------------
// Experiment assembly
// ---------------------------------------------------------------------------

/// Everything one trial needs, built from a resolved config and trial seed.
struct Experiment {
    SystemSetup sys;
    Mat Q;
    Mat R;
    ParamSet set;
    Mat theta0;
    ExplorationConfig exploration;
    ScheduleMode schedule{ScheduleMode::Linear};
    std::size_t C_T{500};
    Vec x0;
    double J_star{0.0};
    Vec u_trim; // Theta_B*^-1 b: the input that cancels the bias exactly
};

[[nodiscard]] inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial_index) noexcept {
    return seed ^ static_cast<std::uint64_t>(trial_index);
}

[[nodiscard]] inline Experiment build_experiment(const ExperimentConfig& resolved, std::uint64_t seed) {
    Experiment ex;
    ex.sys = build_system(resolved, seed);
    const Eigen::Index n = ex.sys.plant.n();
    const Eigen::Index m = ex.sys.plant.m();
    ex.Q = resolved.cost.q_scale * Mat::Identity(n, n);
    ex.R = resolved.cost.r_scale * Mat::Identity(m, m);
    ex.set = build_param_set(resolved, m);

    const Mat& B_m = ex.sys.matched.B_m;
    const Mat B_pinv = (B_m.transpose() * B_m).ldlt().solve(B_m.transpose());
    const std::string& init = resolved.estimator.theta0;
    ex.theta0.resize(m, n + m);
    if (init == "truth") {
        ex.theta0 = ex.sys.matched.theta_star();
    } else if (init == "center") {
        ex.theta0.leftCols(n) = detail::center_or_zero(ex.set.a, m, n);
        if (const auto* box = std::get_if<DiagonalBox>(&ex.set.b)) {
            ex.theta0.rightCols(m) = (0.5 * (box->lo + box->hi)).asDiagonal();
        } else {
            ex.theta0.rightCols(m) = std::get<FrobeniusBall>(ex.set.b).center;
        }
    } else {
        // Estimate consistent with the prior model (A_hat0, B_hat0).
        ex.theta0.leftCols(n) = B_pinv * (ex.sys.matched.A_m - ex.sys.A_hat0);
        ex.theta0.rightCols(m) = B_pinv * ex.sys.B_hat0;
    }
    if (!set_contains(ex.set, ex.theta0, n, 1e-12)) {
        ex.theta0 = euclidean_project(ex.set, ex.theta0, n);
    }

    const auto& e = resolved.exploration;
    ex.exploration.mode = exploration_mode(resolved);
    ex.exploration.C_r = e.C_r;
    ex.exploration.decay_exponent = e.decay_exponent;
    ex.exploration.frequencies = e.frequencies;
    ex.exploration.sigma_explore = e.sigma_explore;
    ex.exploration.seed = derive_seed(seed, "explore");
    ex.schedule = schedule_mode(resolved);
    ex.C_T = resolved.epochs.C_T;
    ex.x0 = resolved.system.x0.empty() ? Vec::Zero(n) : Vec(Eigen::Map<const Vec>(resolved.system.x0.data(), n));
    if (ex.x0.size() != n) {
        throw Error(Errc::ConfigError, "field 'system.x0' has the wrong length");
    }
    ex.J_star = optimal_average_cost(ex.sys.plant, ex.Q, ex.R);
    ex.u_trim = Vec::Zero(m);
    if (ex.sys.plant.has_bias()) {
        ex.u_trim = detail::solve_theta_b(ex.sys.matched.Theta_B_star, ex.sys.plant.input_bias);
    }
    return ex;
}

// ---------------------------------------------------------------------------
// Single trial
// ---------------------------------------------------------------------------

struct TrialResult {
    std::string controller;
    std::uint64_t seed{0};
    bool aborted{false};
    std::size_t abort_step{0};
    std::string abort_reason{};
    double J_star{0.0};
    // per step; ec_norm is NaN unless the comparator runs, theta_err NaN for
    // the non-adaptive controller
    std::vector<double> cost;
    std::vector<double> regret;
    std::vector<double> state_norm;
    std::vector<double> ec_norm;
    std::vector<double> theta_err;
    // diagnostics (not part of the CSV schema)
    std::vector<double> pred_err_sq; // ||Theta_tilde phi||^2
    double max_error_model_residual{0.0};
    double max_identity_residual{0.0};
    std::size_t skipped_updates{0};
    std::size_t epochs{0};
    std::vector<Vec> phi_trace{}; // filled when record_regressor
    std::vector<Vec> r_trace{};
    std::vector<std::size_t> epoch_starts{};
};

struct TrialOptions {
    // Residuals above this abort the run with IdentityViolation. Relative to
    // max(1, ||e_c|| + ||Theta_tilde phi||).
    double error_model_tol{1e-9};
};

namespace detail {

inline void reserve_trial(TrialResult& res, std::size_t T, bool record) {
    res.cost.reserve(T);
    res.regret.reserve(T);
    res.state_norm.reserve(T);
    res.ec_norm.reserve(T);
    res.theta_err.reserve(T);
    res.pred_err_sq.reserve(T);
    if (record) {
        res.phi_trace.reserve(T);
        res.r_trace.reserve(T);
    }
}

} // namespace detail

/// Runs one controller on one seeded trial. `resolved` must have passed
/// resolve_defaults.
[[nodiscard]] inline TrialResult run_trial_resolved(const ExperimentConfig& resolved, const std::string& controller,
                                                    std::uint64_t seed, TrialOptions topts = {}) {
    const bool is_mrac = controller == "mrac_lqr";
    const bool is_ce = controller == "ce";
    if (!is_mrac && !is_ce && controller != "optimal") {
        throw Error(Errc::ConfigError, "field 'controllers': unknown controller '" + controller + "'");
    }
    const Experiment ex = build_experiment(resolved, seed);
    const PlantModel& plant = ex.sys.plant;
    const MatchedStructure& truth = ex.sys.matched;
    const Eigen::Index n = plant.n();
    const Eigen::Index m = plant.m();
    const std::size_t T = resolved.horizon;
    const Mat theta_star = truth.theta_star();
    const Vec* bias = plant.has_bias() ? &plant.input_bias : nullptr;

    TrialResult res;
    res.controller = controller;
    res.seed = seed;
    res.J_star = ex.J_star;
    detail::reserve_trial(res, T, resolved.record_regressor);

    NoiseStream noise(derive_seed(seed, "noise"));
    NoiseStream explore(ex.exploration.seed);

    const ReferenceModel ref = make_reference_model(truth.A_m, truth.B_m);
    const WrlsState wrls0 =
        make_wrls(ex.theta0, resolved.estimator.sigma0, resolved.estimator.gamma, resolved.estimator.resync_every);
    const EpochClock clock0(ex.schedule, ex.C_T);

    MracState mrac;
    CeState ce;
    Mat K_star;
    if (is_mrac) {
        mrac = make_mrac(wrls0, ref, clock0);
    } else if (is_ce) {
        ce = CeState{wrls0, ref, ex.sys.K0, clock0, 0};
    } else {
        K_star = optimal_controller(plant, ex.Q, ex.R);
    }

    Vec x = ex.x0;
    ComparatorState comp{ex.x0};
    double regret = 0.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.epoch_starts.push_back(0);

    for (std::size_t t = 0; t < T; ++t) {
        EpochClock* clk = is_mrac ? &mrac.clock : (is_ce ? &ce.clock : nullptr);
        if (clk && clk->ends_before(t)) {
            if (is_mrac) {
                epoch_update(mrac, ex.Q, ex.R);
            } else {
                ce_epoch_update(ce, ex.Q, ex.R);
            }
            res.epoch_starts.push_back(t);
        }
        const std::size_t k = clk ? clk->k : 0;
        const Vec r = controller == "optimal" ? Vec::Zero(m) : exploration_signal(ex.exploration, k, t, explore, m);

        Vec u;
        try {
            if (is_mrac) {
                u = control_input(mrac, x, r, bias);
            } else if (is_ce) {
                u = ce_control(ce, x, r, bias);
            } else {
                u = K_star * x + ex.u_trim;
            }
        } catch (const Error& e) {
            res.aborted = true;
            res.abort_step = t;
            res.abort_reason = e.what();
            break;
        }

        const Vec du = u - ex.u_trim;
        const double cost = x.dot(ex.Q * x) + du.dot(ex.R * du);
        regret += cost - ex.J_star;
        res.cost.push_back(cost);
        res.regret.push_back(regret);
        res.state_norm.push_back(x.norm());

        const Vec w = sample_noise(noise, n, plant.sigma_w);
        const Vec x_next = plant_step(plant, x, u, w);

        const WrlsState* est = is_mrac ? &mrac.wrls : (is_ce ? &ce.wrls : nullptr);
        if (est) {
            res.theta_err.push_back((est->Theta_hat - theta_star).norm());
        } else {
            res.theta_err.push_back(nan);
        }

        if (est) {
            const Regressor reg = regress_targets(x_next, x, u, ref, bias);
            const Mat theta_tilde = est->Theta_hat - theta_star;
            const Vec tp = theta_tilde * reg.phi;
            res.pred_err_sq.push_back(tp.squaredNorm());
            if (resolved.record_regressor) {
                res.phi_trace.push_back(reg.phi);
                res.r_trace.push_back(r);
            }
            if (is_mrac) {
                res.ec_norm.push_back((x - comp.x_c).norm());
                const ComparatorStep cs =
                    comparator_step(comp, mrac.ref, mrac.theta_offset, plant, truth, r, w, 1e-9);
                res.max_identity_residual = std::max(res.max_identity_residual, cs.identity_residual);
                if (resolved.check_identities) {
                    const double resid =
                        error_model_check(x, comp.x_c, x_next, cs.next.x_c, mrac.ref, theta_tilde, reg.phi);
                    res.max_error_model_residual = std::max(res.max_error_model_residual, resid);
                    const double scale = std::max(1.0, (x - comp.x_c).norm() + tp.norm());
                    if (!(resid <= topts.error_model_tol * scale)) {
                        throw Error(Errc::IdentityViolation,
                                    "error model residual " + std::to_string(resid) + " at step " + std::to_string(t));
                    }
                    const double off = offset_identity_residual(mrac);
                    if (!(off <= 1e-9 * std::max(1.0, mrac.ref.A_mk.norm()))) {
                        throw Error(Errc::IdentityViolation, "offset identity residual " + std::to_string(off));
                    }
                }
                comp = cs.next;
            } else {
                res.ec_norm.push_back(nan);
            }
            try {
                wrls_apply(is_mrac ? mrac.wrls : ce.wrls, reg, ex.set);
            } catch (const Error& e) {
                if (e.code() != Errc::NumericalBreakdown) {
                    throw;
                }
                res.aborted = true;
                res.abort_step = t + 1;
                res.abort_reason = e.what();
                break;
            }
        } else {
            res.ec_norm.push_back(nan);
        }

        x = x_next;
        const double xn = x.norm();
        if (!std::isfinite(xn) || xn > resolved.blowup_threshold) {
            res.aborted = true;
            res.abort_step = t + 1;
            res.abort_reason = "state norm exceeded the blow-up threshold";
            break;
        }
    }
    res.skipped_updates = is_mrac ? mrac.skipped_updates : (is_ce ? ce.skipped_updates : 0);
    res.epochs = res.epoch_starts.size();
    return res;
}

[[nodiscard]] inline TrialResult run_trial(const ExperimentConfig& cfg, const std::string& controller,
                                           std::uint64_t seed, TrialOptions topts = {}) {
    (void)validate_config(cfg);
    return run_trial_resolved(resolve_defaults(cfg), controller, seed, topts);
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

struct McSummary {
    std::string controller;
    std::size_t trials{0};
    std::size_t aborted{0};
    std::string config_digest;
    std::vector<double> regret_median, regret_p20, regret_p80;
    std::vector<double> state_median, state_p20, state_p80;
    std::vector<double> final_regret; // one per trial, index order

    [[nodiscard]] std::size_t steps() const noexcept { return regret_median.size(); }
};

/// Linear-interpolation percentile (the common "type 7" definition).
[[nodiscard]] inline double percentile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

[[nodiscard]] inline double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    return percentile_sorted(v, p);
}

/// Per-step order statistics; trials that stopped early carry their last
/// value forward.
[[nodiscard]] inline McSummary summarize_trials(const std::vector<TrialResult>& trials, std::size_t horizon) {
    McSummary s;
    s.trials = trials.size();
    if (!trials.empty()) {
        s.controller = trials.front().controller;
    }
    for (const auto& tr : trials) {
        s.aborted += tr.aborted ? 1 : 0;
        s.final_regret.push_back(tr.regret.empty() ? 0.0 : tr.regret.back());
    }
    auto at = [](const std::vector<double>& v, std::size_t t) {
        if (v.empty()) {
            return 0.0;
        }
        return v[std::min(t, v.size() - 1)];
    };
    for (auto* vec : {&s.regret_median, &s.regret_p20, &s.regret_p80, &s.state_median, &s.state_p20, &s.state_p80}) {
        vec->resize(horizon);
    }
    std::vector<double> col(trials.size());
    for (std::size_t t = 0; t < horizon && !trials.empty(); ++t) {
        for (std::size_t i = 0; i < trials.size(); ++i) {
            col[i] = at(trials[i].regret, t);
        }
        std::sort(col.begin(), col.end());
        s.regret_p20[t] = percentile_sorted(col, 0.2);
        s.regret_median[t] = percentile_sorted(col, 0.5);
        s.regret_p80[t] = percentile_sorted(col, 0.8);
        for (std::size_t i = 0; i < trials.size(); ++i) {
            col[i] = at(trials[i].state_norm, t);
        }
        std::sort(col.begin(), col.end());
        s.state_p20[t] = percentile_sorted(col, 0.2);
        s.state_median[t] = percentile_sorted(col, 0.5);
        s.state_p80[t] = percentile_sorted(col, 0.8);
    }
    return s;
}

/// Runs `fn(i)` for i in [0, count) on up to `parallelism` threads. The
/// first exception is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, std::size_t parallelism, Fn&& fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                    next.store(count);
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

/// All trials of one controller, index-stable regardless of scheduling.
[[nodiscard]] inline std::vector<TrialResult> run_trials(const ExperimentConfig& resolved, const std::string& controller,
                                                         std::size_t n_trials, std::size_t parallelism) {
    std::vector<TrialResult> out(n_trials);
    parallel_for(n_trials, parallelism,
                 [&](std::size_t i) { out[i] = run_trial_resolved(resolved, controller, trial_seed(resolved.seed, i)); });
    return out;
}

[[nodiscard]] inline McSummary run_monte_carlo(const ExperimentConfig& cfg, const std::string& controller,
                                               std::size_t n_trials, std::size_t parallelism) {
    if (n_trials < 1) {
        throw Error(Errc::ConfigError, "field 'trials' must be positive");
    }
    (void)validate_config(cfg);
    const ExperimentConfig resolved = resolve_defaults(cfg);
    McSummary s = summarize_trials(run_trials(resolved, controller, n_trials, parallelism), resolved.horizon);
    s.controller = controller;
    s.config_digest = config_digest(resolved);
    return s;
}

} // namespace alqr
