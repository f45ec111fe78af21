#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scarr/data_model.hpp"
#include "scarr/step2.hpp"

namespace scarr::oracle {

// ---------------------------------------------------------------------------
// Dense Gaussian oracle

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

inline constexpr int kOracleMaxDays = 12;
inline constexpr int kOracleMaxSites = 4;

/// Exact joint Gaussian of (A_1..A_T, observed y) built from the AR(1)
/// covariance and the observation map, queried by direct conditioning.
/// Throws ConfigError when T > 12 or n > 4.
class DenseGaussianOracle {
public:
    DenseGaussianOracle(const step2::DlmParams& p, const step2::DlmInputs& in,
                        std::optional<double> initial_variance = std::nullopt);

    /// A_t given observed y on days 0..through (0-based); through < 0 gives the prior.
    Moments state(int t, int through) const;
    /// y(t, i) given observed y on days 0..through, excluding (t, i) itself.
    Moments observation(int t, int i, int through) const;
    /// Log-density of all observed entries.
    double log_density() const;

private:
    Moments condition(const Eigen::VectorXd& cross, double prior_mean, double prior_var, int through,
                      int skip) const;

    step2::DlmParams p_;
    int T_ = 0;
    int n_ = 0;
    Eigen::MatrixXd state_cov_;         // T x T
    std::vector<std::pair<int, int>> obs_; // (day, site) of observed entries
    Eigen::VectorXd obs_value_;
    Eigen::VectorXd obs_mean_;
    Eigen::MatrixXd obs_cov_;
    Eigen::MatrixXd means_ctilde_;
    Eigen::MatrixXd means_cmaq_;
};

// ---------------------------------------------------------------------------
// Step II series

struct SeriesConfig {
    std::uint64_t seed = 1;
    int T = 365;
    int n = 6;
    step2::DlmParams truth;
    double missing_rate = 0.0;
    double ctilde_mean = 15.0;
    double ctilde_site_sd = 6.0;
    double ctilde_season_amp = 4.0;
    double cmaq_mean = 25.0;
    double cmaq_sd = 8.0;
};

struct SimulatedSeries {
    step2::DlmInputs inputs;
    Eigen::VectorXd A;
};

SimulatedSeries simulate_step2_series(const SeriesConfig& cfg);

// ---------------------------------------------------------------------------
// Full dataset

struct Step1Truth {
    double intercept = 10.0;
    double pop_density = 5.5;                       // per 10,000 persons/mi²
    std::array<double, 4> season{1.2, 1.7, 1.8, 2.7}; // sin2pi, cos2pi, sin4pi, cos4pi
    std::vector<double> ttv{0.85, 0.4, 0.1, 0.0, 0.0, 0.0, 0.0};
    double forest = -5.4;                           // per 1,000 ha within 2 km
    double developed = 0.0;
    double elevation = 0.0;
    double gamma = 0.49;
    double noise_sd = 1.0;
};

inline step2::DlmParams default_state_truth()
{
    step2::DlmParams p;
    p.sigma_z = 3.0;
    p.sigma_a = 4.0;
    p.psi_a = 0.6;
    p.mu_a = 0.0;
    p.beta_c = 0.7;
    p.gamma_hat = 0.49;
    return p;
}

struct SimulationConfig {
    std::uint64_t seed = 7;
    int T = 365;
    std::string epoch = "1994-01-01";
    int n_calibration = 20;
    int n_dense = 4;
    int n_prediction = 6;
    int interval_min_days = 10;
    int interval_max_days = 14;
    int intervals_per_site = 1;
    double domain_m = 36000.0;
    double site_margin_m = 4000.0;
    double cmaq_cell_m = 12000.0;
    double landuse_cell_m = 100.0;
    double mask_cell_m = 300.0;
    double mask_window_m = 9000.0; // square prediction window centred in the domain
    int n_roads = 30;
    int n_urban_centres = 3;
    int tracts_per_side = 6;
    Step1Truth step1;
    step2::DlmParams step2 = default_state_truth();
    double missing_rate = 0.1;
};

/// Parses `key = value` pairs of a [simulate] config section.
void apply_simulation_option(SimulationConfig& cfg, const std::string& key, const std::string& value);
/// Canonical text of every configuration value (used in the config hash).
std::string simulation_config_text(const SimulationConfig& cfg);

struct SimulatedDataset {
    Dataset dataset;
    Eigen::VectorXd A;
    std::string truth_text;
};

/// Sites by seeded uniform scatter, synthetic roads, land use, tracts and
/// CMAQ fields; calibration responses from the regression truth, dense and
/// prediction-site responses from the state-space truth.
SimulatedDataset simulate_step1_dataset(const SimulationConfig& cfg);

} // namespace scarr::oracle
