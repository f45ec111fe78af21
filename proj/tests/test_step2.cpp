#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "scarr/error.hpp"
#include "scarr/oracle.hpp"
#include "scarr/rng.hpp"
#include "scarr/step2.hpp"

using namespace scarr;
using step2::DlmInputs;
using step2::DlmParams;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

DlmInputs make_inputs(const Eigen::MatrixXd& y, const Eigen::MatrixXd& ct, const Eigen::MatrixXd& cm)
{
    DlmInputs in;
    in.y = y;
    in.ctilde = ct;
    in.cmaq = cm;
    for (int t = 0; t < y.rows(); ++t)
        in.days.push_back(t + 1);
    for (int i = 0; i < y.cols(); ++i)
        in.site_ids.push_back("S" + std::to_string(i + 1));
    return in;
}

DlmParams params(double sz, double sa, double psi, double mu, double bc, double g)
{
    DlmParams p;
    p.sigma_z = sz;
    p.sigma_a = sa;
    p.psi_a = psi;
    p.mu_a = mu;
    p.beta_c = bc;
    p.gamma_hat = g;
    return p;
}

oracle::SimulatedSeries series(std::uint64_t seed, int T, int n, const DlmParams& truth, double missing = 0.0)
{
    oracle::SeriesConfig sc;
    sc.seed = seed;
    sc.T = T;
    sc.n = n;
    sc.truth = truth;
    sc.missing_rate = missing;
    return oracle::simulate_step2_series(sc);
}

} // namespace

TEST_CASE("zero state variance leaves the state at zero")
{
    const auto s = series(3, 20, 3, params(1.5, 0.0, 0.4, 0.0, 0.7, 0.5));
    const auto p = params(1.5, 0.0, 0.4, 0.0, 0.7, 0.5);
    step2::FilterOptions fo;
    fo.initial_variance = 0.0;
    const auto est = step2::kalman_smoother(p, s.inputs, fo);
    for (int t = 0; t < s.inputs.T(); ++t) {
        CHECK(std::abs(est.filt_mean[t]) < 1e-12);
        CHECK(std::abs(est.smooth_mean[t]) < 1e-12);
        CHECK(est.filt_var[t] < 1e-12);
    }
}

TEST_CASE("T=3, n=2 against dense conditioning")
{
    Eigen::MatrixXd y(3, 2), ct(3, 2), cm(3, 2);
    y << 10.0, 12.0, kNan, 9.0, 14.0, 11.5;
    ct << 5.0, 6.0, 5.5, 6.5, 4.0, 7.0;
    cm << 8.0, 9.0, 7.5, 10.0, 9.0, 8.5;
    ct(1, 0) = kNan;
    cm(1, 0) = kNan;
    const auto in = make_inputs(y, ct, cm);
    const auto p = params(1.3, 2.1, 0.55, 1.0, 0.8, 0.4);
    const auto est = step2::kalman_smoother(p, in);
    const oracle::DenseGaussianOracle orc(p, in);
    for (int t = 0; t < 3; ++t) {
        CHECK(std::abs(est.filt_mean[t] - orc.state(t, t).mean) < 1e-10);
        CHECK(std::abs(est.filt_var[t] - orc.state(t, t).var) < 1e-10);
        CHECK(std::abs(est.pred_mean[t] - orc.state(t, t - 1).mean) < 1e-10);
        CHECK(std::abs(est.smooth_mean[t] - orc.state(t, 2).mean) < 1e-10);
        CHECK(std::abs(est.smooth_var[t] - orc.state(t, 2).var) < 1e-10);
    }
    CHECK(std::abs(est.loglik - orc.log_density()) < 1e-10);
}

TEST_CASE("T=1: smoothed equals filtered")
{
    Eigen::MatrixXd y(1, 2), ct(1, 2), cm(1, 2);
    y << 3.0, 4.5;
    ct << 1.0, 2.0;
    cm << 2.0, 2.5;
    const auto est = step2::kalman_smoother(params(1.0, 2.0, 0.3, 0.5, 0.2, 0.1), make_inputs(y, ct, cm));
    CHECK(est.smooth_mean[0] == est.filt_mean[0]);
    CHECK(est.smooth_var[0] == est.filt_var[0]);
}

TEST_CASE("huge observation noise: smoothed state stays at the mean")
{
    const auto s = series(5, 50, 3, params(2.0, 1.0, 0.5, 3.0, 0.5, 0.5));
    const auto est = step2::kalman_smoother(params(1e12, 1.0, 0.5, 3.0, 0.5, 0.5), s.inputs);
    for (int t = 0; t < 50; ++t)
        CHECK(std::abs(est.smooth_mean[t] - 3.0) < 1e-6);
}

TEST_CASE("T=2, n=1 closed-form bivariate normal")
{
    Eigen::MatrixXd y(2, 1), ct(2, 1), cm(2, 1);
    y << 4.0, 6.5;
    ct << 2.0, 3.0;
    cm << 5.0, 4.0;
    const auto p = params(1.2, 1.7, 0.6, 0.8, 0.9, 0.3);
    const double P = p.sigma_a * p.sigma_a / (1 - p.psi_a * p.psi_a);
    const double v = P + p.sigma_z * p.sigma_z;
    const double c = p.psi_a * P;
    const double r1 = y(0, 0) - (p.mu_a + p.beta_c * ct(0, 0) + p.gamma_hat * cm(0, 0));
    const double r2 = y(1, 0) - (p.mu_a + p.beta_c * ct(1, 0) + p.gamma_hat * cm(1, 0));
    const double det = v * v - c * c;
    const double quad = (v * r1 * r1 - 2 * c * r1 * r2 + v * r2 * r2) / det;
    const double expected = -std::log(2 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
    CHECK(std::abs(step2::log_likelihood(p, make_inputs(y, ct, cm)) - expected) < 1e-12);
}

TEST_CASE("appending a fully missing day adds nothing to the log-likelihood")
{
    const auto s = series(9, 30, 4, oracle::default_state_truth(), 0.2);
    auto in = s.inputs;
    const auto p = oracle::default_state_truth();
    const double base = step2::log_likelihood(p, in);
    const auto T = in.T();
    in.y.conservativeResize(T + 1, Eigen::NoChange);
    in.ctilde.conservativeResize(T + 1, Eigen::NoChange);
    in.cmaq.conservativeResize(T + 1, Eigen::NoChange);
    in.y.row(T).setConstant(kNan);
    in.ctilde.row(T).setConstant(kNan);
    in.cmaq.row(T).setConstant(kNan);
    in.days.push_back(T + 1);
    const auto est = step2::kalman_filter(p, in);
    CHECK(est.loglik_terms[T] == 0.0);
    CHECK(std::abs(est.loglik - base) < 1e-12);
}

TEST_CASE("site order does not matter")
{
    const auto s = series(13, 60, 5, oracle::default_state_truth(), 0.15);
    const auto p = params(2.5, 3.0, 0.7, 1.0, 0.6, 0.49);
    auto perm = s.inputs;
    const int order[] = {3, 0, 4, 1, 2};
    for (int j = 0; j < 5; ++j) {
        perm.y.col(j) = s.inputs.y.col(order[j]);
        perm.ctilde.col(j) = s.inputs.ctilde.col(order[j]);
        perm.cmaq.col(j) = s.inputs.cmaq.col(order[j]);
        perm.site_ids[j] = s.inputs.site_ids[order[j]];
    }
    const auto a = step2::kalman_smoother(p, s.inputs);
    const auto b = step2::kalman_smoother(p, perm);
    CHECK(std::abs(a.loglik - b.loglik) < 1e-9);
    CHECK((a.smooth_mean - b.smooth_mean).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("finite-difference derivatives are consistent across step sizes")
{
    const auto s = series(17, 120, 4, oracle::default_state_truth(), 0.1);
    const auto p = params(2.7, 3.6, 0.55, 0.4, 0.65, 0.49);
    double DlmParams::* fields[] = {&DlmParams::sigma_z, &DlmParams::sigma_a, &DlmParams::psi_a, &DlmParams::mu_a,
                                    &DlmParams::beta_c};
    for (auto f : fields) {
        auto central = [&](double h) {
            auto lo = p, hi = p;
            lo.*f -= h;
            hi.*f += h;
            return (step2::log_likelihood(hi, s.inputs) - step2::log_likelihood(lo, s.inputs)) / (2 * h);
        };
        const double g1 = central(1e-4);
        const double g2 = central(1e-5);
        CHECK(std::abs(g1 - g2) <= 1e-4 * std::max(1.0, std::abs(g1)));
    }
}

TEST_CASE("smoothing never increases the state variance")
{
    Rng rng(21);
    for (int k = 0; k < 20; ++k) {
        const auto p = params(rng.uniform(0.5, 3), rng.uniform(0.1, 3), rng.uniform(0, 0.95), 0, 0.5, 0.5);
        const auto s = series(100 + k, 40, 3, p, 0.3);
        const auto est = step2::kalman_smoother(p, s.inputs);
        for (int t = 0; t < 40; ++t)
            CHECK(est.smooth_var[t] <= est.filt_var[t] + 1e-12);
    }
}

TEST_CASE("all observations missing")
{
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 2, kNan);
    const auto in = make_inputs(y, y, y);
    const auto p = params(1.0, 2.0, 0.5, 4.0, 0.3, 0.2);
    const auto est = step2::kalman_smoother(p, in);
    CHECK(est.loglik == 0.0);
    for (int t = 0; t < 5; ++t) {
        CHECK(est.smooth_mean[t] == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(est.smooth_var[t] == doctest::Approx(4.0 / 0.75).epsilon(1e-12));
    }
}

TEST_CASE("MLE: null beta_c covered, optimum beats the truth")
{
    auto truth = oracle::default_state_truth();
    truth.beta_c = 0.0;
    int covered = 0;
    for (int seed = 1; seed <= 20; ++seed) {
        const auto s = series(300 + seed, 365, 6, truth, 0.1);
        step2::Step2Config cfg;
        cfg.drop_mu_a = false;
        const auto fit = step2::fit_mle(s.inputs, truth.gamma_hat, cfg);
        REQUIRE(fit.converged);
        REQUIRE(fit.params.se.beta_c);
        covered += std::abs(fit.params.beta_c) < 1.96 * *fit.params.se.beta_c;
        CHECK(fit.loglik >= step2::log_likelihood(truth, s.inputs) - 1e-6);
    }
    CHECK(covered >= 18);
}

TEST_CASE("fit text round trip")
{
    const auto s = series(41, 200, 4, oracle::default_state_truth(), 0.1);
    const auto fit = step2::fit_mle(s.inputs, 0.49);
    const auto text = step2::fit_to_text(fit, "# scarr 0.1.0 config_hash=0");
    const auto back = step2::fit_from_text(text);
    CHECK(back.params.sigma_z == fit.params.sigma_z);
    CHECK(back.params.sigma_a == fit.params.sigma_a);
    CHECK(back.params.psi_a == fit.params.psi_a);
    CHECK(back.params.mu_a == fit.params.mu_a);
    CHECK(back.params.beta_c == fit.params.beta_c);
    CHECK(back.params.gamma_hat == fit.params.gamma_hat);
    CHECK(back.params.mu_dropped == fit.params.mu_dropped);
    CHECK(back.loglik == fit.loglik);
    CHECK(step2::fit_to_text(back, "# scarr 0.1.0 config_hash=0") == text);
    CHECK_THROWS_AS(step2::fit_from_text("garbage"), DataError);
}

TEST_CASE("option and input errors")
{
    step2::Step2Config cfg;
    CHECK_THROWS_AS(step2::apply_step2_option(cfg, "multistarts", "4"), ConfigError);
    CHECK_THROWS_AS(step2::apply_step2_option(cfg, "gradient_tol", "-1"), ConfigError);
    CHECK_THROWS_AS(step2::apply_step2_option(cfg, "drop_mu_a", "maybe"), ConfigError);
    CHECK_THROWS_AS(step2::apply_step2_option(cfg, "nonsense", "1"), ConfigError);
    step2::apply_step2_option(cfg, "multistarts", "2");
    CHECK(cfg.multistarts == 2);

    const auto s = series(43, 30, 3, oracle::default_state_truth());
    CHECK_THROWS_AS(step2::fit_mle(s.inputs, 0.49), DataError);
    CHECK_THROWS_AS(params(0.0, 1.0, 0.5, 0, 0, 0).validate(), ConfigError);
    CHECK_THROWS_AS(params(1.0, 1.0, 1.0, 0, 0, 0).validate(), ConfigError);
}
