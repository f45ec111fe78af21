#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scarr/covariates.hpp"
#include "scarr/data_model.hpp"
#include "scarr/parallel.hpp"

namespace scarr::step1 {

// ---------------------------------------------------------------------------
// Design

/// Regression design. Column order is fixed:
///   intercept, pop_density, sin2pi, cos2pi, sin4pi, cos4pi, [elevation],
///   ttv_<ring>..., lu_<category>_<ring>..., cmaq
/// Population density enters per 10,000 persons/mi², land use per 1,000 ha.
struct Design {
    std::vector<std::string> columns;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> row_sites;
    std::vector<Point> locations;
    BufferSpec radii = BufferSpec::standard();
    bool rank_deficient = false;
    std::vector<std::string> warnings;

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }
    int column_index(const std::string& name) const;
};

enum class LanduseMode { rings, combined };

/// Number of retained rings (an inner-to-outer prefix) per buffer group.
struct BufferSelection {
    std::size_t ttv_rings = 0;
    std::array<std::size_t, 3> landuse_rings{0, 0, 0}; // indexed by LanduseCategory

    bool operator==(const BufferSelection&) const = default;
};

enum class ErrorKind { independent, spherical, exponential, matern };
std::string to_string(ErrorKind k);
ErrorKind parse_error_kind(const std::string& s);

struct Step1Config {
    ErrorKind error_kind = ErrorKind::independent;
    double alpha = 0.05;
    bool use_elevation = false;
    bool quadrant = false;
    bool select = true;
    LanduseMode landuse_mode = LanduseMode::combined;
    std::vector<LanduseCategory> landuse_categories = {LanduseCategory::forest};
    BufferSpec radii = BufferSpec::standard();
    double matern_smoothness = 1.5;
    double collinearity_threshold = 0.85;

    std::size_t landuse_group_size() const
    {
        return landuse_mode == LanduseMode::combined ? 1 : std::min<std::size_t>(3, radii.rings());
    }
    BufferSelection full_selection() const;
};

/// Value of a named design column at a location and season.
/// Throws DataError when the location lacks that covariate.
double column_value(const std::string& column, const SiteCovariates& site,
                    const std::array<double, 4>& season, const BufferSpec& radii,
                    std::optional<double> cmaq = std::nullopt);

std::vector<std::string> design_columns(const Step1Config& cfg, const BufferSelection& sel);

/// Rows: interval observations at calibration sites with complete covariates.
/// Observations lacking covariates are dropped with a warning naming the site.
Design assemble_design(const Dataset& ds, const std::vector<CovariateRow>& rows,
                       const std::vector<std::string>& columns, const BufferSpec& radii);
Design assemble_design(const Dataset& ds, const std::vector<CovariateRow>& rows,
                       const Step1Config& cfg, const BufferSelection& sel);

/// Pairs of combined (0-2 km) land-use aggregates with |r| above threshold.
struct Collinearity {
    std::string a, b;
    double r = 0.0;
};
std::vector<Collinearity> landuse_collinearity(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                               double threshold);

// ---------------------------------------------------------------------------
// Error models

struct ErrorModel {
    ErrorKind kind = ErrorKind::independent;
    double sill = 1.0;       // partial sill σ²
    double range = 0.0;      // metres
    double nugget = 0.0;
    double smoothness = 0.5; // Matérn ν

    void validate() const;
};

/// Covariance at separation `d` (metres). Nugget is added at d == 0.
double cov_value(const ErrorModel& model, double d);

// ---------------------------------------------------------------------------
// Fits

struct StepOneFit {
    std::vector<std::string> columns;
    Eigen::VectorXd estimates;
    Eigen::MatrixXd covariance;
    ErrorModel error;
    int n = 0;
    int p = 0;
    int rank = 0;
    double rss = 0.0;
    double tss = 0.0;
    double r2 = 0.0;
    double adj_r2 = 0.0;
    double rmse = 0.0;
    double loglik = 0.0;
    std::optional<double> press;
    std::optional<double> rmspe;
    BufferSelection retained;
    BufferSpec radii = BufferSpec::standard();
    // Fitted values and residuals on the design rows.
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;

    double std_error(std::size_t i) const;
    std::optional<double> coefficient(const std::string& name) const;
};

struct OlsOptions {
    /// Use a minimum-norm solution instead of failing on rank deficiency.
    bool allow_rank_deficient = false;
};

StepOneFit fit_ols(const Design& design, const OlsOptions& opts = {});

struct GlsOptions {
    double smoothness = 1.5; // Matérn only
    int max_iter = 2000;
    /// The spatial fit is kept only when 2·(loglik - loglik at range 0)
    /// exceeds the chi-square(2) quantile at 1 - boundary_alpha; otherwise
    /// the fit collapses to range 0 (the independent-error solution).
    /// 0 disables the check.
    double boundary_alpha = 0.05;
};

/// Maximum-likelihood GLS: (σ², range, nugget) by bounded Nelder-Mead over
/// (log range, log nugget/σ²) with σ² profiled out, 5 deterministic starts.
/// A collapsed fit carries the OLS estimates with range 0, sill equal to the
/// ML residual variance and nugget 0.
StepOneFit fit_gls(const Design& design, ErrorKind kind, const GlsOptions& opts = {});

/// Profile Gaussian log-likelihood of a GLS fit at fixed (range, nugget
/// ratio); used by fit_gls and tests.
double gls_profile_loglik(const Design& design, ErrorKind kind, double range, double nugget_ratio,
                          double smoothness, Eigen::VectorXd* beta = nullptr, double* scale = nullptr);

struct FTest {
    double F = 0.0;
    int df1 = 0;
    int df2 = 0;
    double p = 1.0;
};

/// Nested-model F-test; throws ConfigError when not nested or q == 0.
FTest f_test(const StepOneFit& reduced, const StepOneFit& full);

struct PressResult {
    double press = 0.0;
    double rmspe = 0.0;
    int used = 0;
    std::vector<int> excluded_rows; // leverage == 1
};

/// Hat-matrix shortcut: PRESS = Σ (e_i / (1 - h_ii))².
PressResult loocv_press(const StepOneFit& fit, const Design& design);
/// Explicit leave-one-out refits.
PressResult loocv_press_refit(const Design& design, Exec exec = Exec::parallel);

// ---------------------------------------------------------------------------
// Selection and dispersion

struct SelectionResult {
    BufferSelection retained;
    std::vector<std::string> log;
};

/// Backward elimination of outer buffer rings (see README for the rule).
SelectionResult backward_buffer_selection(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                          const Step1Config& cfg);

struct StepFunction {
    BufferSpec rings;
    std::vector<double> heights;
    std::vector<double> std_errors;
};

/// Step heights of the TTV ring coefficients of `fit`.
StepFunction dispersion_step_function(const StepOneFit& fit, const BufferSpec& radii);

/// Dispersion model: `base` columns plus the first `rings` TTV rings,
/// isotropic or restricted to one quadrant.
Design ttv_only_design(const Dataset& ds, const std::vector<CovariateRow>& rows, const BufferSpec& radii,
                       std::size_t rings, std::optional<Quadrant> quadrant = std::nullopt,
                       const std::vector<std::string>& base = {"intercept"});
StepFunction isotropic_dispersion(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                  const BufferSpec& radii, std::size_t rings,
                                  const std::vector<std::string>& base = {"intercept"});
std::array<StepFunction, 4> quadrant_dispersion(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                                const BufferSpec& radii, std::size_t rings,
                                                const std::vector<std::string>& base = {"intercept"},
                                                Exec exec = Exec::parallel);

/// Fraction of (quadrant pair, ring) cells with |h_a - h_b| <= k·sqrt(se_a² + se_b²).
double quadrant_agreement(const std::array<StepFunction, 4>& q, double k = 2.0);

/// C̃ = X'β̂ + G'λ̂: every retained column except cmaq.
double additive_bias_c_tilde(const StepOneFit& fit, const SiteCovariates& site,
                             const std::array<double, 4>& season);

// ---------------------------------------------------------------------------
// Pipeline + persistence

struct Step1Result {
    StepOneFit fit;
    Design design;
    SelectionResult selection;
    std::optional<StepFunction> dispersion;
    std::optional<std::array<StepFunction, 4>> quadrants;
    std::vector<std::string> warnings;
};

Step1Result run_step1(const Dataset& ds, const std::vector<CovariateRow>& rows, const Step1Config& cfg);

/// Everything persisted in step1_fit.txt.
struct Step1Record {
    std::string comment;
    StepOneFit fit;
    BufferSpec radii;
    LanduseMode landuse_mode = LanduseMode::combined;
    std::optional<StepFunction> dispersion;
    std::optional<std::array<StepFunction, 4>> quadrants;
};

Step1Record make_record(const Step1Result& result, const Step1Config& cfg, const std::string& comment);

/// Flat key=value text; from_text(to_text(r)) writes back identically.
std::string record_to_text(const Step1Record& record);
Step1Record record_from_text(const std::string& text);

/// Applies `key = value` pairs of a [step1] config section.
void apply_step1_option(Step1Config& cfg, const std::string& key, const std::string& value);

} // namespace scarr::step1
