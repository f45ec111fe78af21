#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "scarr/covariates.hpp"
#include "scarr/csv.hpp"
#include "scarr/error.hpp"
#include "scarr/oracle.hpp"
#include "scarr/rng.hpp"
#include "scarr/step1.hpp"
#include "scarr/step2.hpp"

namespace fs = std::filesystem;
using namespace scarr;
using step2::DlmParams;

namespace {

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

double lag1_correlation(const Eigen::VectorXd& a)
{
    const Eigen::Index n = a.size();
    const Eigen::VectorXd x = a.head(n - 1).array() - a.head(n - 1).mean();
    const Eigen::VectorXd y = a.tail(n - 1).array() - a.tail(n - 1).mean();
    return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

std::map<std::string, std::string> written(const oracle::SimulatedDataset& sim, const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("scarr_oracle_" + name);
    fs::remove_all(dir);
    write_dataset(sim.dataset, dir);
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        out[e.path().filename().string()] = read_text_file(e.path());
    return out;
}

} // namespace

TEST_CASE("T=1, n=1: posterior of the state")
{
    DlmParams p;
    p.sigma_z = 1.5;
    p.sigma_a = 2.0;
    p.psi_a = 0.6;
    p.mu_a = 1.0;
    p.beta_c = 0.5;
    p.gamma_hat = 0.25;
    step2::DlmInputs in;
    in.site_ids = {"a"};
    in.days = {1};
    in.y = Eigen::MatrixXd::Constant(1, 1, 9.0);
    in.ctilde = Eigen::MatrixXd::Constant(1, 1, 4.0);
    in.cmaq = Eigen::MatrixXd::Constant(1, 1, 8.0);
    const oracle::DenseGaussianOracle orc(p, in);

    const double P = 4.0 / (1 - 0.36);
    const double r = 9.0 - 1.0 - 0.5 * 4.0 - 0.25 * 8.0;
    const double v = P + 2.25;
    CHECK(orc.state(0, 0).mean == doctest::Approx(1.0 + P / v * r).epsilon(1e-14));
    CHECK(orc.state(0, 0).var == doctest::Approx(P * 2.25 / v).epsilon(1e-14));
    CHECK(orc.state(0, -1).mean == doctest::Approx(1.0));
    CHECK(orc.state(0, -1).var == doctest::Approx(P));
    CHECK(orc.log_density() == doctest::Approx(-0.5 * std::log(2 * M_PI * v) - 0.5 * r * r / v).epsilon(1e-14));
}

TEST_CASE("log-density equals the sum of filter terms")
{
    Rng rng(8);
    for (int k = 0; k < 50; ++k) {
        DlmParams p;
        p.sigma_z = rng.uniform(0.3, 3.0);
        p.sigma_a = rng.uniform(0.0, 3.0);
        p.psi_a = rng.uniform(0.0, 0.95);
        p.mu_a = rng.uniform(-3, 3);
        p.beta_c = rng.uniform(-1, 1);
        p.gamma_hat = rng.uniform(-1, 1);
        const int T = static_cast<int>(rng.uniform_int(1, 12));
        const int n = static_cast<int>(rng.uniform_int(1, 4));
        const auto s = series(1000 + k, T, n, p, 0.25);
        const auto est = step2::kalman_filter(p, s.inputs);
        const oracle::DenseGaussianOracle orc(p, s.inputs);
        CHECK(std::abs(est.loglik_terms.sum() - orc.log_density()) < 1e-9);
    }
}

TEST_CASE("oracle is invariant to site order")
{
    const auto truth = oracle::default_state_truth();
    const auto s = series(4, 10, 4, truth, 0.2);
    auto perm = s.inputs;
    const int order[] = {2, 3, 1, 0};
    for (int j = 0; j < 4; ++j) {
        perm.y.col(j) = s.inputs.y.col(order[j]);
        perm.ctilde.col(j) = s.inputs.ctilde.col(order[j]);
        perm.cmaq.col(j) = s.inputs.cmaq.col(order[j]);
    }
    const oracle::DenseGaussianOracle a(truth, s.inputs), b(truth, perm);
    CHECK(a.log_density() == doctest::Approx(b.log_density()).epsilon(1e-12));
    for (int t = 0; t < 10; ++t)
        CHECK(a.state(t, 9).mean == doctest::Approx(b.state(t, 9).mean).epsilon(1e-12));
}

TEST_CASE("oracle size limits")
{
    const auto truth = oracle::default_state_truth();
    CHECK_THROWS_AS(oracle::DenseGaussianOracle(truth, series(1, 13, 2, truth).inputs), ConfigError);
    CHECK_THROWS_AS(oracle::DenseGaussianOracle(truth, series(1, 5, 5, truth).inputs), ConfigError);
}

TEST_CASE("simulated state autocorrelation")
{
    auto truth = oracle::default_state_truth();
    truth.psi_a = 0.0;
    CHECK(std::abs(lag1_correlation(series(2, 2000, 1, truth).A)) < 0.1);
    truth.psi_a = 0.6;
    CHECK(std::abs(lag1_correlation(series(2, 2000, 1, truth).A) - 0.6) < 0.1);
}

TEST_CASE("zero state innovation gives a constant state")
{
    auto truth = oracle::default_state_truth();
    truth.sigma_a = 0.0;
    truth.mu_a = 2.5;
    const auto s = series(6, 100, 2, truth);
    for (int t = 0; t < 100; ++t)
        CHECK(s.A[t] == 2.5);
}

TEST_CASE("observation noise has the configured sd")
{
    const auto truth = oracle::default_state_truth();
    const auto s = series(12, 5000, 6, truth);
    double ss = 0.0;
    int m = 0;
    for (int t = 0; t < s.inputs.T(); ++t)
        for (int i = 0; i < s.inputs.n(); ++i) {
            const double e = s.inputs.y(t, i) - s.A[t] - truth.beta_c * s.inputs.ctilde(t, i) -
                             truth.gamma_hat * s.inputs.cmaq(t, i);
            ss += e * e;
            ++m;
        }
    CHECK(std::abs(std::sqrt(ss / m) / truth.sigma_z - 1.0) < 0.05);
}

TEST_CASE("missing rate is honoured")
{
    const auto s = series(14, 1000, 4, oracle::default_state_truth(), 0.3);
    const double frac = 1.0 - static_cast<double>(s.inputs.observed_entries()) / 4000.0;
    CHECK(std::abs(frac - 0.3) < 0.03);
}

TEST_CASE("dataset simulation is deterministic")
{
    oracle::SimulationConfig cfg;
    cfg.T = 60;
    const auto a = written(oracle::simulate_step1_dataset(cfg), "det_a");
    const auto b = written(oracle::simulate_step1_dataset(cfg), "det_b");
    CHECK(a == b);
    cfg.seed = 8;
    const auto c = written(oracle::simulate_step1_dataset(cfg), "det_c");
    CHECK(c.at("interval_obs.csv") != a.at("interval_obs.csv"));
}

TEST_CASE("noiseless calibration responses follow the regression truth")
{
    oracle::SimulationConfig cfg;
    cfg.seed = 19;
    cfg.T = 60;
    cfg.n_calibration = 40;
    cfg.n_dense = 0;
    cfg.n_prediction = 0;
    cfg.step1.noise_sd = 0.0;
    const auto sim = oracle::simulate_step1_dataset(cfg);
    const auto rows = build_covariate_rows(sim.dataset, BufferSpec::standard());
    step1::Step1Config s1;
    const auto d = step1::assemble_design(sim.dataset, rows, s1, s1.full_selection());
    const auto fit = step1::fit_ols(d);
    CHECK(fit.rss < 1e-18 * d.y.squaredNorm());
    auto coef = [&](const std::string& name) {
        for (std::size_t j = 0; j < fit.columns.size(); ++j)
            if (fit.columns[j] == name)
                return fit.estimates[static_cast<Eigen::Index>(j)];
        FAIL("no column " << name);
        return 0.0;
    };
    CHECK(coef("intercept") == doctest::Approx(cfg.step1.intercept).epsilon(1e-9));
    CHECK(coef("cmaq") == doctest::Approx(cfg.step1.gamma).epsilon(1e-9));
}

TEST_CASE("simulation option errors")
{
    oracle::SimulationConfig cfg;
    CHECK_THROWS_AS(oracle::apply_simulation_option(cfg, "days", "1.5"), ConfigError);
    CHECK_THROWS_AS(oracle::apply_simulation_option(cfg, "nope", "1"), ConfigError);
    oracle::apply_simulation_option(cfg, "seed", "99");
    CHECK(cfg.seed == 99);
    oracle::apply_simulation_option(cfg, "days", "0");
    CHECK_THROWS_AS(oracle::simulate_step1_dataset(cfg), ConfigError);
}
