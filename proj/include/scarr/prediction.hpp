#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scarr/covariates.hpp"
#include "scarr/data_model.hpp"
#include "scarr/step1.hpp"
#include "scarr/step2.hpp"

namespace scarr::prediction {

struct PredictOptions {
    bool smoothed = false;  // condition on all days instead of days up to t
    bool mean_only = false; // interval for the mean, without observation noise
};

/// Per-day predictions at one location. Uncertainty in the Step I
/// quantities (ctilde, gamma_hat) is not propagated.
struct SitePrediction {
    std::string site_id;
    std::vector<int> days;
    std::vector<double> pred;
    std::vector<double> half_width; // 95%: 1.96 sd
    int days_used = 0;
};

/// ctilde and cmaq terms for locations that are not part of the fit.
struct NewSiteTerms {
    std::vector<std::string> ids;
    Eigen::MatrixXd ctilde; // T x k
    Eigen::MatrixXd cmaq;   // T x k
};

NewSiteTerms new_site_terms(const Dataset& ds, const step1::StepOneFit& fit, const std::vector<SiteRecord>& sites,
                            int T, Exec exec = Exec::parallel);

/// Appends the new sites to the observation vector with every value
/// missing, reruns the filter (or smoother) at the fitted parameters and
/// returns predictions for the new sites.
std::vector<SitePrediction> predict_sites(const step2::DlmParams& params, const step2::DlmInputs& in,
                                          const NewSiteTerms& sites, const PredictOptions& opts = {});

SitePrediction predict_site(const step2::DlmParams& params, const step2::DlmInputs& in, const std::string& id,
                            const Eigen::VectorXd& ctilde, const Eigen::VectorXd& cmaq,
                            const PredictOptions& opts = {});

/// Fitted means (state estimate + site terms) for the sites already in `in`.
Eigen::MatrixXd fitted_values(const step2::DlmParams& params, const step2::DlmInputs& in,
                              const PredictOptions& opts = {});

// ---------------------------------------------------------------------------
// Grid

/// Time-constant part of ctilde (all retained columns except the season
/// basis and cmaq) and the nearest CMAQ pixel of every mask cell. Cells that
/// are nodata in the mask, outside CMAQ coverage or outside every tract are
/// marked invalid.
struct GridStatic {
    RasterGrid mask;
    std::vector<double> static_term;
    std::vector<int> pixel;
    std::vector<char> valid;
    int invalid_cells = 0;
};

GridStatic grid_static_terms(const Dataset& ds, const step1::StepOneFit& fit, const RasterGrid& mask,
                             Exec exec = Exec::parallel);

/// Season part of ctilde on `day`.
double season_term(const step1::StepOneFit& fit, const std::array<double, 4>& season);

struct GridDay {
    int day = 0;
    RasterGrid raster;
    double half_width = 0.0; // identical for every cell of a day
};

/// Predictions for one day (1-based). `state` must come from kalman_filter
/// or kalman_smoother on `in` according to `opts.smoothed`.
GridDay predict_grid_day(const Dataset& ds, const step1::StepOneFit& fit, const step2::DlmParams& params,
                         const step2::StateEstimate& state, const GridStatic& grid, int day,
                         const PredictOptions& opts = {}, Exec exec = Exec::parallel);

std::vector<GridDay> predict_grid(const Dataset& ds, const step1::StepOneFit& fit, const step2::DlmParams& params,
                                  const step2::DlmInputs& in, const RasterGrid& mask, int first_day, int last_day,
                                  const PredictOptions& opts = {}, Exec exec = Exec::parallel);

std::string grid_file_name(int day); // no2_dayNNNN.asc

// ---------------------------------------------------------------------------
// Metrics

/// Pearson correlation; nullopt when fewer than 2 pairs or zero variance.
std::optional<double> pearson_r(const std::vector<double>& a, const std::vector<double>& b);
double mean_squared_error(const std::vector<double>& pred, const std::vector<double>& obs);

struct SiteMetric {
    std::string site_id;
    int n = 0;
    std::optional<double> r;
    double mse = 0.0;
    std::optional<double> r_cmaq;
    double mse_cmaq = 0.0;
};

struct MetricsReport {
    std::vector<SiteMetric> sites;
    std::optional<double> mspe;
    std::optional<double> mspe_cmaq;
    int mspe_count = 0;
};

/// Per-site r and MSE over days where the observation is present. Throws
/// DataError when there is no overlap.
SiteMetric site_metric(const std::string& id, const std::vector<double>& pred, const std::vector<double>& obs,
                       const std::vector<double>& cmaq);

std::string metrics_csv(const MetricsReport& report, const std::string& comment);
std::string site_predictions_csv(const std::vector<SitePrediction>& preds, const std::string& comment);

/// Fitted-site metrics for dense sites, plus MSPE over interval observations
/// of prediction sites (calibration sites when there are none).
MetricsReport evaluate(const Dataset& ds, const step1::StepOneFit& fit, const step2::DlmParams& params,
                       const step2::DlmInputs& in, const PredictOptions& opts = {},
                       std::vector<SitePrediction>* site_predictions = nullptr, Exec exec = Exec::parallel);

} // namespace scarr::prediction
