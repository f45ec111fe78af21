#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scarr/data_model.hpp"
#include "scarr/parallel.hpp"

namespace scarr::step1 {
struct StepOneFit;
}

namespace scarr::step2 {

struct StandardErrors {
    std::optional<double> sigma_z, sigma_a, psi_a, mu_a, beta_c;
};

/// Observation y_it = A_t + beta_c * ctilde_it + gamma_hat * cmaq_it + sigma_z * e_it,
/// state A_t - mu_a = psi_a (A_{t-1} - mu_a) + sigma_a * xi_t.
struct DlmParams {
    double sigma_z = 1.0;
    double sigma_a = 1.0;
    double psi_a = 0.5;
    double mu_a = 0.0;
    double beta_c = 0.0;
    double gamma_hat = 0.0; // fixed from the Step I fit
    StandardErrors se;
    bool mu_dropped = false;

    /// sigma_z > 0, sigma_a >= 0, 0 <= psi_a < 1, all finite.
    void validate() const;
};

/// Day-by-site matrices (rows = days, columns = sites). Missing
/// observations are NaN; ctilde and cmaq may be NaN only where y is.
struct DlmInputs {
    std::vector<std::string> site_ids;
    std::vector<int> days;
    Eigen::MatrixXd y;
    Eigen::MatrixXd ctilde;
    Eigen::MatrixXd cmaq;

    int T() const { return static_cast<int>(y.rows()); }
    int n() const { return static_cast<int>(y.cols()); }
    int observed_entries() const;
    int observed_days() const;
    void validate() const;
};

struct StateEstimate {
    Eigen::VectorXd pred_mean, pred_var;     // A_t | y_1..t-1
    Eigen::VectorXd filt_mean, filt_var;     // A_t | y_1..t
    Eigen::VectorXd smooth_mean, smooth_var; // A_t | y_1..T (empty unless smoothed)
    Eigen::VectorXd loglik_terms;
    double loglik = 0.0;
};

struct FilterOptions {
    /// Replaces the stationary prior variance of A_1.
    std::optional<double> initial_variance;
};

StateEstimate kalman_filter(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts = {});
StateEstimate kalman_smoother(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts = {});
double log_likelihood(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts = {});

struct Step2Config {
    bool drop_mu_a = true;
    int multistarts = 3;
    double gradient_tol = 1e-6;
    double step_tol = 1e-9;
    int max_iter = 500;
    int min_days_per_param = 10;
    Exec exec = Exec::serial;
};

void apply_step2_option(Step2Config& cfg, const std::string& key, const std::string& value);

struct MleResult {
    DlmParams params;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    int starts_converged = 0;
    std::vector<std::string> log;
};

/// Quasi-Newton MLE over (log sigma_z, log sigma_a, logit psi_a, mu_a, beta_c)
/// from `multistarts` data-driven starting points. gamma_hat is held at
/// `gamma_hat`. Standard errors come from the inverse numeric Hessian in the
/// natural parameters.
MleResult fit_mle(const DlmInputs& in, double gamma_hat, const Step2Config& cfg = {});

/// Negative-Hessian standard errors at `p`; entries unavailable when the
/// Hessian is not positive definite.
StandardErrors standard_errors(const DlmParams& p, const DlmInputs& in);

std::string fit_to_text(const MleResult& fit, const std::string& comment);
MleResult fit_from_text(const std::string& text);

std::string state_path_csv(const DlmInputs& in, const StateEstimate& est, const std::string& comment);

/// Inputs over dataset days 1..T for every dense-time site: y from the daily
/// series, ctilde from the Step I fit at each day's DYR, cmaq from the
/// nearest pixel.
DlmInputs build_inputs(const Dataset& ds, const step1::StepOneFit& fit, Exec exec = Exec::parallel);

/// Adds one column per site with y missing (the sites contribute no
/// likelihood). Used for prediction at new locations.
DlmInputs augment(const DlmInputs& in, const std::vector<std::string>& ids, const Eigen::MatrixXd& ctilde,
                  const Eigen::MatrixXd& cmaq);

} // namespace scarr::step2
