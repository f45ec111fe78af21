// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "scarr/cli.hpp"
#include "scarr/covariates.hpp"
#include "scarr/csv.hpp"
#include "scarr/oracle.hpp"
#include "scarr/prediction.hpp"
#include "scarr/rng.hpp"
#include "scarr/step1.hpp"
#include "scarr/step2.hpp"

#ifndef SCARR_SOURCE_DIR
#define SCARR_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace scarr;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

step2::DlmParams random_params(Rng& rng)
{
    step2::DlmParams p;
    p.sigma_z = rng.uniform(0.3, 4.0);
    p.sigma_a = rng.uniform(0.0, 4.0);
    p.psi_a = rng.uniform(0.0, 0.95);
    p.mu_a = rng.uniform(-5.0, 5.0);
    p.beta_c = rng.uniform(-1.0, 1.0);
    p.gamma_hat = rng.uniform(-1.0, 1.0);
    return p;
}

oracle::SimulatedSeries tiny_instance(Rng& rng, const step2::DlmParams& p, int T, int n, double missing)
{
    oracle::SeriesConfig sc;
    sc.seed = static_cast<std::uint64_t>(rng.uniform_int(1, 1'000'000'000));
    sc.T = T;
    sc.n = n;
    sc.truth = p;
    sc.missing_rate = missing;
    return oracle::simulate_step2_series(sc);
}

// 1. Filter, smoother and log-likelihood against dense conditioning.
Outcome oracle_equivalence()
{
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240601);
    double worst = 0.0;
    int with_missing = 0;
    for (int k = 0; k < 200; ++k) {
        const int T = static_cast<int>(rng.uniform_int(1, 10));
        const int n = static_cast<int>(rng.uniform_int(1, 3));
        const auto p = random_params(rng);
        const auto sim = tiny_instance(rng, p, T, n, k % 2 ? 0.3 : 0.0);
        const auto& in = sim.inputs;
        if (in.observed_entries() < T * n)
            ++with_missing;
        step2::FilterOptions fo;
        std::optional<double> init;
        if (k % 5 == 4) {
            init = rng.uniform(0.0, 10.0);
            fo.initial_variance = init;
        }
        const oracle::DenseGaussianOracle ora(p, in, init);
        const auto est = step2::kalman_smoother(p, in, fo);
        auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
        for (int t = 0; t < T; ++t) {
            const auto pr = ora.state(t, t - 1);
            const auto fi = ora.state(t, t);
            const auto sm = ora.state(t, T - 1);
            track(est.pred_mean[t], pr.mean);
            track(est.pred_var[t], pr.var);
            track(est.filt_mean[t], fi.mean);
            track(est.filt_var[t], fi.var);
            track(est.smooth_mean[t], sm.mean);
            track(est.smooth_var[t], sm.var);
        }
        track(est.loglik, ora.log_density());
        track(step2::log_likelihood(p, in, fo), ora.log_density());
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-8 && secs < 10.0 && with_missing > 0,
            "max abs diff " + fmt("%.3g", worst) + ", " + std::to_string(with_missing) +
                " instances with missing entries, " + fmt("%.2f s", secs)};
}

// 2. Step II parameter recovery.
Outcome step2_recovery()
{
    const auto t0 = std::chrono::steady_clock::now();
    step2::DlmParams truth;
    truth.sigma_z = 22.5;
    truth.sigma_a = 30.3;
    truth.psi_a = 0.59;
    truth.beta_c = 0.71;
    truth.mu_a = 0.0;
    truth.gamma_hat = 0.49;
    std::array<int, 4> covered{};
    int dropped = 0;
    const int seeds = 20;
    for (int s = 1; s <= seeds; ++s) {
        oracle::SeriesConfig sc;
        sc.seed = 1000 + s;
        sc.T = 730;
        sc.n = 6;
        sc.truth = truth;
        const auto sim = oracle::simulate_step2_series(sc);
        const auto fit = step2::fit_mle(sim.inputs, truth.gamma_hat);
        const auto& q = fit.params;
        auto within = [](double est, std::optional<double> se, double tr) {
            return se && std::abs(est - tr) <= 3.0 * *se;
        };
        covered[0] += within(q.sigma_z, q.se.sigma_z, truth.sigma_z);
        covered[1] += within(q.sigma_a, q.se.sigma_a, truth.sigma_a);
        covered[2] += within(q.psi_a, q.se.psi_a, truth.psi_a);
        covered[3] += within(q.beta_c, q.se.beta_c, truth.beta_c);
        dropped += q.mu_dropped;
    }
    const double secs = seconds_since(t0);
    const int need = (9 * seeds + 9) / 10;
    bool ok = dropped >= need && secs < 300.0;
    for (int c : covered)
        ok = ok && c >= need;
    return {ok, "within 3 SE (sigma_z, sigma_a, psi_a, beta_c) = " + std::to_string(covered[0]) + "," +
                    std::to_string(covered[1]) + "," + std::to_string(covered[2]) + "," +
                    std::to_string(covered[3]) + " of 20, mu_a dropped " + std::to_string(dropped) +
                    " of 20, " + fmt("%.1f s", secs)};
}

step1::Design noisy_design(std::uint64_t seed, int n_calibration, std::vector<CovariateRow>* rows_out = nullptr,
                           Dataset* ds_out = nullptr)
{
    oracle::SimulationConfig cfg;
    cfg.seed = seed;
    cfg.n_calibration = n_calibration;
    cfg.n_dense = 0;
    cfg.n_prediction = 0;
    cfg.T = 60;
    const auto sim = oracle::simulate_step1_dataset(cfg);
    const auto rows = build_covariate_rows(sim.dataset, BufferSpec::standard());
    step1::Step1Config s1;
    auto d = step1::assemble_design(sim.dataset, rows, s1, s1.full_selection());
    if (rows_out)
        *rows_out = rows;
    if (ds_out)
        *ds_out = sim.dataset;
    return d;
}

// 3. Step I exactness.
Outcome step1_exactness()
{
    // Noiseless responses from known coefficients on a simulated design.
    auto d = noisy_design(31, 40);
    Eigen::VectorXd beta(d.cols());
    for (Eigen::Index j = 0; j < d.cols(); ++j)
        beta[j] = (j % 2 ? -1.0 : 1.0) * (0.3 + 0.2 * static_cast<double>(j % 4) + 0.05 * static_cast<double>(j));
    d.y = d.X * beta;
    const auto fit = step1::fit_ols(d);
    double worst_coef = 0.0;
    for (Eigen::Index j = 0; j < d.cols(); ++j)
        worst_coef = std::max(worst_coef, std::abs(fit.estimates[j] - beta[j]) / std::abs(beta[j]));

    // PRESS shortcut against explicit refits on noisy responses.
    const auto noisy = noisy_design(32, 40);
    const auto nfit = step1::fit_ols(noisy);
    const auto press = step1::loocv_press(nfit, noisy);
    const auto refit = step1::loocv_press_refit(noisy);
    const double press_rel = std::abs(press.press - refit.press) / refit.press;

    // Hand example.
    step1::Design h;
    h.columns = {"intercept", "x"};
    h.X.resize(4, 2);
    h.X << 1, 1, 1, 2, 1, 3, 1, 4;
    h.y.resize(4);
    h.y << 1, 2, 2, 3;
    h.row_sites = {"a", "b", "c", "d"};
    h.locations = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    const auto full = step1::fit_ols(h);
    step1::Design r = h;
    r.columns = {"intercept"};
    r.X = h.X.leftCols(1);
    const auto reduced = step1::fit_ols(r);
    const auto f = step1::f_test(reduced, full);
    const bool hand = std::abs(full.estimates[1] - 0.6) < 1e-12 && std::abs(full.estimates[0] - 0.5) < 1e-12 &&
                      std::abs(full.rss - 0.2) < 1e-12 && std::abs(reduced.rss - 2.0) < 1e-12 &&
                      std::abs(f.F - 18.0) < 1e-10 && f.df1 == 1 && f.df2 == 2;
    return {worst_coef < 1e-9 && press_rel < 1e-9 && hand,
            "coef rel err " + fmt("%.3g", worst_coef) + ", PRESS rel diff " + fmt("%.3g", press_rel) +
                ", hand example slope " + fmt("%.15g", full.estimates[1]) + " F " + fmt("%.15g", f.F)};
}

// 4. GLS reduces to OLS without spatial dependence; Matern(0.5) = exponential.
Outcome gls_reduction()
{
    double worst = 0.0;
    double worst_range = 0.0;
    for (std::uint64_t seed = 41; seed < 46; ++seed) {
        const auto d = noisy_design(seed, 60);
        const auto ols = step1::fit_ols(d);
        for (auto kind : {step1::ErrorKind::exponential, step1::ErrorKind::spherical, step1::ErrorKind::matern}) {
            const auto gls = step1::fit_gls(d, kind);
            const double scale = ols.estimates.cwiseAbs().maxCoeff();
            worst = std::max(worst, (gls.estimates - ols.estimates).cwiseAbs().maxCoeff() / scale);
            worst_range = std::max(worst_range, gls.error.range);
        }
    }
    double cov_diff = 0.0;
    for (double range : {10.0, 500.0, 3000.0})
        for (double frac : {0.0, 0.1, 0.37, 1.0, 2.5, 10.0}) {
            step1::ErrorModel m{step1::ErrorKind::matern, 2.0, range, 0.3, 0.5};
            step1::ErrorModel e{step1::ErrorKind::exponential, 2.0, range, 0.3, 0.5};
            cov_diff = std::max(cov_diff, std::abs(step1::cov_value(m, frac * range) - step1::cov_value(e, frac * range)));
        }
    return {worst < 1e-6 && cov_diff < 1e-10,
            "max rel coef diff " + fmt("%.3g", worst) + " (largest fitted range " + fmt("%.3g m", worst_range) +
                "), Matern(0.5) vs exponential " + fmt("%.3g", cov_diff)};
}

// 5. Selection keeps exactly the TTV rings inside 2 km.
Outcome selection_behaviour()
{
    int exact = 0;
    std::string counts;
    for (int s = 1; s <= 20; ++s) {
        std::vector<CovariateRow> rows;
        Dataset ds;
        noisy_design(500 + s, 150, &rows, &ds);
        step1::Step1Config cfg;
        const auto sel = step1::backward_buffer_selection(ds, rows, cfg);
        exact += sel.retained.ttv_rings == 3;
        counts += std::to_string(sel.retained.ttv_rings);
    }
    return {exact >= 16, std::to_string(exact) + " of 20 seeds retain exactly 3 rings (per seed: " + counts + ")"};
}

// 6. Quadrant step functions agree under an isotropic truth.
Outcome isotropy()
{
    double agree_sum = 0.0;
    int seeds = 0;
    for (int s = 1; s <= 20; ++s) {
        std::vector<CovariateRow> rows;
        Dataset ds;
        noisy_design(700 + s, 150, &rows, &ds);
        step1::Step1Config cfg;
        cfg.select = false;
        cfg.quadrant = true;
        const auto res = step1::run_step1(ds, rows, cfg);
        agree_sum += step1::quadrant_agreement(*res.quadrants);
        ++seeds;
    }
    const double frac = agree_sum / seeds;
    return {frac >= 0.8, "mean pairwise agreement " + fmt("%.3f", frac) + " over 20 seeds"};
}

// 7. Augmentation neutrality and withheld-coordinate prediction.
Outcome prediction_neutrality()
{
    oracle::SeriesConfig sc;
    sc.seed = 77;
    sc.T = 200;
    sc.n = 6;
    sc.truth = oracle::default_state_truth();
    sc.missing_rate = 0.1;
    const auto sim = oracle::simulate_step2_series(sc);
    const auto& p = sc.truth;
    const auto base = step2::kalman_smoother(p, sim.inputs);

    Rng rng(78);
    const int k = 50;
    std::vector<std::string> ids;
    Eigen::MatrixXd ct(sc.T, k), cm(sc.T, k);
    for (int j = 0; j < k; ++j) {
        ids.push_back("N" + std::to_string(j));
        for (int t = 0; t < sc.T; ++t) {
            ct(t, j) = rng.uniform(0.0, 30.0);
            cm(t, j) = rng.uniform(1.0, 50.0);
        }
    }
    const auto aug = step2::augment(sim.inputs, ids, ct, cm);
    const auto est = step2::kalman_smoother(p, aug);
    double neutral = std::abs(est.loglik - base.loglik);
    neutral = std::max(neutral, (est.filt_mean - base.filt_mean).cwiseAbs().maxCoeff());
    neutral = std::max(neutral, (est.smooth_mean - base.smooth_mean).cwiseAbs().maxCoeff());

    double worst = 0.0;
    for (int inst = 0; inst < 40; ++inst) {
        const int T = static_cast<int>(rng.uniform_int(1, 8));
        const int n = static_cast<int>(rng.uniform_int(1, 3));
        const auto q = random_params(rng);
        const auto tiny = tiny_instance(rng, q, T, n, 0.2);
        Eigen::VectorXd c(T), x(T);
        for (int t = 0; t < T; ++t) {
            c[t] = rng.uniform(0.0, 20.0);
            x[t] = rng.uniform(1.0, 40.0);
        }
        const auto big = step2::augment(tiny.inputs, {"W"}, c, x);
        const oracle::DenseGaussianOracle ora(q, big);
        for (bool smoothed : {false, true}) {
            prediction::PredictOptions opts;
            opts.smoothed = smoothed;
            const auto sp = prediction::predict_site(q, tiny.inputs, "W", c, x, opts);
            for (int t = 0; t < T; ++t) {
                const auto m = ora.observation(t, n, smoothed ? T - 1 : t);
                worst = std::max(worst, std::abs(sp.pred[t] - m.mean));
                worst = std::max(worst, std::abs(sp.half_width[t] - 1.96 * std::sqrt(m.var)));
            }
        }
    }
    return {neutral < 1e-10 && worst < 1e-10,
            "augmentation change " + fmt("%.3g", neutral) + ", prediction vs oracle " + fmt("%.3g", worst)};
}

int cli(const std::vector<std::string>& args)
{
    std::vector<const char*> argv{"scarr"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

// 8. End-to-end golden run.
Outcome golden_run()
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path src = SCARR_SOURCE_DIR;
    const auto conf = (src / "data" / "mini.conf").string();
    const auto golden = (src / "data" / "mini" / "golden_metrics.csv").string();
    const auto dir = (fs::temp_directory_path() / "scarr_acceptance_golden").string();
    fs::remove_all(dir);
    std::vector<int> codes;
    codes.push_back(cli({"simulate", "--config", conf, "--out", dir}));
    for (const char* step : {"features", "fit-step1", "fit-step2", "predict"})
        codes.push_back(cli({step, dir, "--config", conf}));
    codes.push_back(cli({"validate", dir, "--config", conf, "--golden", golden}));
    const double secs = seconds_since(t0);
    std::string list;
    bool ok = secs < 120.0;
    for (int c : codes) {
        list += std::to_string(c);
        ok = ok && c == 0;
    }
    fs::remove_all(dir);
    return {ok, "exit codes " + list + ", " + fmt("%.1f s", secs)};
}

// 9. Covariate geometry.
Outcome geometry()
{
    const auto spec = BufferSpec::standard();
    std::vector<TrafficSegment> seg{{{700.0, 0.0}, 0.05, 20000.0}};
    const auto ttv = ring_ttv({0.0, 0.0}, seg, spec);
    bool ttv_ok = ttv.size() == spec.rings();
    for (std::size_t k = 0; k < ttv.size(); ++k)
        ttv_ok = ttv_ok && ttv[k] == (k == 1 ? 0.1 : 0.0);

    RasterGrid r(500, 500, -7500.0, -7500.0, 30.0, -9999.0);
    std::fill(r.values.begin(), r.values.end(), 41.0);
    const auto rings = spec.first(3);
    const Point centre{7.0, -11.0};
    const auto lu = ring_landuse_area(centre, r, default_nlcd92_reclass(), rings);
    const double cell_ha = 30.0 * 30.0 / 1e4;
    double worst = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < rings.rings(); ++k) {
        const double rk = rings.radii_km[k] * 1000.0;
        const double analytic = std::numbers::pi * (rk * rk - prev * prev) / 1e4;
        prev = rk;
        worst = std::max(worst, std::abs(lu.hectares[static_cast<int>(LanduseCategory::forest)][k] - analytic) / cell_ha);
    }
    return {ttv_ok && worst <= 1.0,
            "ring 2 ttv " + fmt("%.17g", ttv[1]) + ", land-use area error " + fmt("%.3f", worst) + " cell areas"};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"oracle equivalence", oracle_equivalence},
        {"step II parameter recovery", step2_recovery},
        {"step I exactness", step1_exactness},
        {"GLS reduction", gls_reduction},
        {"selection behaviour", selection_behaviour},
        {"isotropy check", isotropy},
        {"prediction neutrality and correctness", prediction_neutrality},
        {"end-to-end golden run", golden_run},
        {"covariate geometry", geometry},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %zu (%s): %s - %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
