#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "alqr/excitation.hpp"
#include "alqr/harness.hpp"
#include "alqr/io.hpp"

using namespace alqr;

namespace {

ExperimentConfig small_config(const std::string& preset = "laplacian-stable-gaussian", std::size_t T = 2000) {
    ExperimentConfig cfg = preset_config(preset);
    cfg.horizon = T;
    cfg.epochs.C_T = 200;
    return resolve_defaults(cfg);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Compares against tests/golden/<name>; ALQR_UPDATE_GOLDEN=1 rewrites it.
void check_golden(const std::string& name, const std::string& text) {
    const std::filesystem::path path = std::filesystem::path(ALQR_GOLDEN_DIR) / name;
    if (const char* up = std::getenv("ALQR_UPDATE_GOLDEN"); up != nullptr && std::string(up) == "1") {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream(path, std::ios::binary) << text;
    }
    ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden file " << path;
    EXPECT_TRUE(slurp(path) == text) << "output differs from " << path;
}

bool same_series(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST(OptimalCost, ClosedForms) {
    PlantModel scalar{Mat::Zero(1, 1), Mat::Identity(1, 1), 1.0, {}, {}};
    EXPECT_NEAR(optimal_average_cost(scalar, Mat::Identity(1, 1), Mat::Identity(1, 1)), 1.0, 1e-14);
    scalar.sigma_w = 0.0;
    EXPECT_EQ(optimal_average_cost(scalar, Mat::Identity(1, 1), Mat::Identity(1, 1)), 0.0);
}

TEST(Trial, ZeroRegretAtTruthWithoutNoise) {
    ExperimentConfig cfg = preset_config("laplacian-unstable-gaussian");
    cfg.system.sigma_w = 0.0;
    cfg.exploration.mode = "off";
    cfg.estimator.theta0 = "truth";
    cfg.horizon = 1200;
    const TrialResult r = run_trial(cfg, "mrac_lqr", 3);
    ASSERT_EQ(r.regret.size(), 1200u);
    for (const double v : r.regret) {
        ASSERT_EQ(v, 0.0);
    }
}

TEST(Trial, DeterministicAndTelescoping) {
    const ExperimentConfig cfg = small_config();
    for (const char* c : {"optimal", "ce", "mrac_lqr"}) {
        const TrialResult a = run_trial_resolved(cfg, c, 21);
        const TrialResult b = run_trial_resolved(cfg, c, 21);
        EXPECT_TRUE(same_series(a.cost, b.cost)) << c;
        EXPECT_TRUE(same_series(a.regret, b.regret)) << c;
        EXPECT_TRUE(same_series(a.theta_err, b.theta_err)) << c;
        EXPECT_TRUE(same_series(a.ec_norm, b.ec_norm)) << c;
        ASSERT_EQ(a.regret.size(), cfg.horizon);
        EXPECT_EQ(a.regret[0], a.cost[0] - a.J_star);
        for (std::size_t t = 1; t < a.regret.size(); ++t) {
            ASSERT_EQ(a.regret[t], a.regret[t - 1] + (a.cost[t] - a.J_star)) << c << " t=" << t;
        }
        EXPECT_EQ(a.cost.size(), a.state_norm.size());
        EXPECT_EQ(a.cost.size(), a.ec_norm.size());
        EXPECT_EQ(a.cost.size(), a.theta_err.size());
    }
    const TrialResult m = run_trial_resolved(cfg, "mrac_lqr", 21);
    EXPECT_FALSE(std::isnan(m.ec_norm.back()));
    EXPECT_TRUE(std::isnan(run_trial_resolved(cfg, "ce", 21).ec_norm.back()));
    EXPECT_TRUE(std::isnan(run_trial_resolved(cfg, "optimal", 21).theta_err.back()));
    EXPECT_LE(m.max_error_model_residual, 1e-9);
}

TEST(Trial, SharedNoiseAcrossControllers) {
    // At the true parameters with a frozen estimator and no exploration MRAC
    // runs u = K* x after the first epoch, so it must follow the optimal
    // controller's trajectory through the same noise.
    ExperimentConfig cfg = preset_config("laplacian-stable-gaussian");
    cfg.exploration.mode = "off";
    cfg.estimator.theta0 = "truth";
    cfg.horizon = 400;
    cfg.epochs.C_T = 1;
    cfg.estimator.sigma0 = 1e-6;
    const ExperimentConfig r = resolve_defaults(cfg);
    const TrialResult opt = run_trial_resolved(r, "optimal", 5);
    const TrialResult mr = run_trial_resolved(r, "mrac_lqr", 5);
    EXPECT_NEAR(mr.state_norm.back(), opt.state_norm.back(), 1e-6);
}

TEST(Trial, BlowUpIsFlagged) {
    ExperimentConfig cfg = preset_config("laplacian-unstable-gaussian");
    cfg.controllers = {"ce"};
    cfg.blowup_threshold = 1.0;
    cfg.horizon = 2000;
    const TrialResult r = run_trial(cfg, "ce", 1);
    EXPECT_TRUE(r.aborted);
    EXPECT_GT(r.abort_step, 0u);
    EXPECT_EQ(r.regret.size(), r.abort_step);

    std::vector<TrialResult> trials{r, run_trial(cfg, "ce", 2)};
    const McSummary s = summarize_trials(trials, cfg.horizon);
    EXPECT_EQ(s.aborted, 2u);
    EXPECT_EQ(s.steps(), cfg.horizon);
    const double lo = std::min(trials[0].regret.back(), trials[1].regret.back());
    const double hi = std::max(trials[0].regret.back(), trials[1].regret.back());
    EXPECT_NEAR(s.regret_p80.back(), lo + 0.8 * (hi - lo), 1e-12 * std::abs(hi));
}

TEST(Trial, UnknownController) {
    EXPECT_THROW((void)run_trial_resolved(small_config(), "lqg", 1), Error);
}

TEST(MonteCarlo, SingleTrialSummary) {
    const ExperimentConfig cfg = small_config();
    const TrialResult tr = run_trial_resolved(cfg, "mrac_lqr", trial_seed(cfg.seed, 0));
    const McSummary s = run_monte_carlo(cfg, "mrac_lqr", 1, 1);
    EXPECT_EQ(s.trials, 1u);
    EXPECT_TRUE(same_series(s.regret_median, tr.regret));
    EXPECT_TRUE(same_series(s.regret_p20, tr.regret));
    EXPECT_TRUE(same_series(s.regret_p80, tr.regret));
    EXPECT_TRUE(same_series(s.state_median, tr.state_norm));
    EXPECT_EQ(s.config_digest.size(), 16u);
}

TEST(MonteCarlo, OrderAndParallelismInvariant) {
    const ExperimentConfig cfg = small_config("laplacian-unstable-gaussian", 1000);
    auto trials = run_trials(cfg, "ce", 9, 1);
    const McSummary a = summarize_trials(trials, cfg.horizon);
    std::mt19937 gen(3);
    std::shuffle(trials.begin(), trials.end(), gen);
    const McSummary b = summarize_trials(trials, cfg.horizon);
    EXPECT_TRUE(same_series(a.regret_median, b.regret_median));
    EXPECT_TRUE(same_series(a.regret_p20, b.regret_p20));
    EXPECT_TRUE(same_series(a.state_p80, b.state_p80));

    const McSummary p1 = run_monte_carlo(cfg, "mrac_lqr", 6, 1);
    const McSummary p3 = run_monte_carlo(cfg, "mrac_lqr", 6, 3);
    EXPECT_EQ(summary_csv(p1), summary_csv(p3));
    EXPECT_TRUE(same_series(p1.final_regret, p3.final_regret));
    for (std::size_t t = 0; t < p1.steps(); ++t) {
        ASSERT_LE(p1.regret_p20[t], p1.regret_median[t]);
        ASSERT_LE(p1.regret_median[t], p1.regret_p80[t]);
    }
}

TEST(MonteCarlo, Percentiles) {
    EXPECT_DOUBLE_EQ(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(percentile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(percentile({4.0, 1.0, 3.0, 2.0, 5.0}, 0.2), 1.8);
    EXPECT_DOUBLE_EQ(percentile({7.0}, 0.8), 7.0);
    EXPECT_THROW((void)run_monte_carlo(small_config(), "ce", 0, 1), Error);
}

TEST(Golden, TrialCsv) {
    ExperimentConfig cfg = preset_config("laplacian-stable-gaussian");
    cfg.horizon = 500;
    cfg.epochs.C_T = 100;
    check_golden("trial_laplacian_stable_mrac_seed3.csv", trial_csv(run_trial(cfg, "mrac_lqr", 3)));
}

TEST(Golden, LaplacianSummary) {
    ExperimentConfig cfg = preset_config("laplacian-unstable-gaussian");
    cfg.horizon = 1000;
    cfg.epochs.C_T = 100;
    check_golden("summary_laplacian_unstable_mrac_100.csv", summary_csv(run_monte_carlo(cfg, "mrac_lqr", 100, 1)));
}

TEST(Excitation, ConstantSignal) {
    Vec c(4);
    c << 1.0, -2.0, 0.5, 3.0;
    const std::vector<Vec> phi(50, c);
    const ExcitationReport rep = analyze_excitation(phi, 0, 0, 50, {0.0});
    EXPECT_LT((rep.amplitudes[0] - c.cast<std::complex<double>>()).norm(), 1e-14);
    EXPECT_LT((rep.info_matrix - c * c.transpose()).norm(), 1e-12);
    EXPECT_FALSE(rep.has_prediction);
}

TEST(Excitation, PureSinusoidConcentrates) {
    const std::size_t T0 = 1000;
    const double w1 = 2.0 * std::numbers::pi * 50.0 / T0;
    const double w2 = 2.0 * std::numbers::pi * 170.0 / T0;
    const double w3 = 1.3;
    std::vector<Vec> phi;
    for (std::size_t t = 0; t < T0; ++t) {
        phi.push_back(Vec::Constant(2, std::cos(w1 * static_cast<double>(t))));
    }
    const ExcitationReport rep = analyze_excitation(phi, 0, 0, T0, {w1, w2, w3});
    EXPECT_NEAR(std::abs(rep.amplitudes[0](0)), 0.5, 1e-12);
    EXPECT_LT(std::abs(rep.amplitudes[1](0)), 1e-12);
    EXPECT_LE(std::abs(rep.amplitudes[2](0)), 2.0 / static_cast<double>(T0));
}

TEST(Excitation, WindowErrors) {
    const std::vector<Vec> phi(10, Vec::Ones(6));
    try {
        (void)analyze_excitation(phi, 0, 0, 10, {0.5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::WindowTooShort);
    }
    const std::vector<Vec> longer(40, Vec::Ones(6));
    EXPECT_THROW((void)analyze_excitation(longer, 0, 30, 20, {0.5}), Error);
    EXPECT_NO_THROW((void)analyze_excitation(longer, 0, 20, 20, {0.5}));
}

TEST(Excitation, TransferPredictionOnOpenLoopStep) {
    // x' = a x + r, u = r (K = 0): x_bar = r_bar / (e^{iw} - a).
    ClosedLoop cl{Mat::Constant(1, 1, 0.5), Mat::Identity(1, 1), Mat::Zero(1, 1)};
    const std::complex<double> rb(0.0, -0.5);
    const CVec pred = predicted_amplitude(cl, 0.7, CVec::Constant(1, rb));
    const std::complex<double> g = 1.0 / (std::polar(1.0, 0.7) - 0.5);
    EXPECT_LT(std::abs(pred(0) + g * rb), 1e-15);
    EXPECT_LT(std::abs(pred(1) - rb), 1e-15);
}
