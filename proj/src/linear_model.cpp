#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/fisher_f.hpp>

#include "scarr/error.hpp"
#include "scarr/step1.hpp"

namespace scarr::step1 {

double StepOneFit::std_error(std::size_t i) const
{
    const double v = covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    return v >= 0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
}

std::optional<double> StepOneFit::coefficient(const std::string& name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name)
            return estimates[static_cast<Eigen::Index>(i)];
    return std::nullopt;
}

namespace {

void fill_diagnostics(StepOneFit& fit, const Design& d)
{
    const auto n = d.rows();
    fit.fitted = d.X * fit.estimates;
    fit.residuals = d.y - fit.fitted;
    fit.rss = fit.residuals.squaredNorm();
    const double mean = d.y.mean();
    fit.tss = (d.y.array() - mean).square().sum();
    if (fit.tss > 0)
        fit.r2 = 1.0 - fit.rss / fit.tss;
    else
        fit.r2 = fit.rss == 0 ? 1.0 : 0.0;
    const int dof = fit.n - fit.rank;
    fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / static_cast<double>(n - fit.p);
    fit.rmse = std::sqrt(fit.rss / dof);
}

} // namespace

StepOneFit fit_ols(const Design& d, const OlsOptions& opts)
{
    const auto n = d.rows();
    const auto p = d.cols();
    if (n <= p)
        throw NumericalError("fit_ols: need more rows than columns (n=" + std::to_string(n) +
                             ", p=" + std::to_string(p) + ")");
    StepOneFit fit;
    fit.columns = d.columns;
    fit.radii = d.radii;
    fit.n = static_cast<int>(n);
    fit.p = static_cast<int>(p);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.X);
    fit.rank = static_cast<int>(qr.rank());
    Eigen::MatrixXd xtx_inv;
    if (fit.rank == p) {
        fit.estimates = qr.solve(d.y);
        const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
        const Eigen::MatrixXd Rinv =
            R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
        const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
        const auto& P = qr.colsPermutation();
        xtx_inv = P * inner * P.transpose();
    } else {
        if (!opts.allow_rank_deficient)
            throw NumericalError("fit_ols: rank-deficient design (rank " + std::to_string(fit.rank) + " < " +
                                 std::to_string(p) + ")");
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(d.X);
        fit.estimates = cod.solve(d.y);
        const Eigen::MatrixXd pinv = cod.pseudoInverse();
        xtx_inv = pinv * pinv.transpose();
    }
    fill_diagnostics(fit, d);
    const double sigma2 = fit.rss / (fit.n - fit.rank);
    fit.covariance = sigma2 * xtx_inv;
    fit.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * fit.rss / n) + 1.0);
    fit.error.kind = ErrorKind::independent;
    fit.error.sill = sigma2;
    fit.error.range = 0.0;
    fit.error.nugget = 0.0;
    return fit;
}

FTest f_test(const StepOneFit& reduced, const StepOneFit& full)
{
    for (const auto& c : reduced.columns)
        if (std::find(full.columns.begin(), full.columns.end(), c) == full.columns.end())
            throw ConfigError("f_test: non-nested models (column '" + c + "' missing from full model)");
    if (reduced.n != full.n)
        throw ConfigError("f_test: models fitted on different rows");
    const Eigen::VectorXd yr = reduced.fitted + reduced.residuals;
    const Eigen::VectorXd yf = full.fitted + full.residuals;
    if ((yr - yf).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + yf.cwiseAbs().maxCoeff()))
        throw ConfigError("f_test: models fitted on different responses");
    const int q = full.p - reduced.p;
    if (q <= 0)
        throw ConfigError("f_test: non-nested/empty comparison (q = 0)");
    FTest t;
    t.df1 = q;
    t.df2 = full.n - full.p;
    const double num = std::max(0.0, reduced.rss - full.rss) / q;
    const double den = full.rss / t.df2;
    if (den == 0.0) {
        t.F = num > 0 ? std::numeric_limits<double>::infinity() : 0.0;
        t.p = num > 0 ? 0.0 : 1.0;
        return t;
    }
    t.F = num / den;
    boost::math::fisher_f dist(t.df1, t.df2);
    t.p = t.F > 0 ? boost::math::cdf(boost::math::complement(dist, t.F)) : 1.0;
    return t;
}

namespace {

constexpr double kLeverageTol = 1e-10;

Eigen::VectorXd hat_diagonal(const Eigen::MatrixXd& X)
{
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    const auto n = X.rows();
    const auto r = qr.rank();
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
    return Q.rowwise().squaredNorm();
}

} // namespace

PressResult loocv_press(const StepOneFit& fit, const Design& d)
{
    const Eigen::VectorXd h = hat_diagonal(d.X);
    PressResult out;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        if (1.0 - h[i] < kLeverageTol) {
            out.excluded_rows.push_back(static_cast<int>(i));
            continue;
        }
        const double e = fit.residuals[i] / (1.0 - h[i]);
        out.press += e * e;
        ++out.used;
    }
    out.rmspe = out.used > 0 ? std::sqrt(out.press / out.used) : 0.0;
    return out;
}

namespace {

// Leave-one-out prediction error for row i; nullopt when the reduced design
// loses rank (row i had leverage 1).
std::optional<double> holdout_error(const Design& d, Eigen::Index i)
{
    const auto n = d.rows();
    const auto p = d.cols();
    Design sub;
    sub.columns = d.columns;
    sub.X.resize(n - 1, p);
    sub.y.resize(n - 1);
    for (Eigen::Index r = 0, k = 0; r < n; ++r) {
        if (r == i)
            continue;
        sub.X.row(k) = d.X.row(r);
        sub.y[k] = d.y[r];
        ++k;
    }
    try {
        const auto f = fit_ols(sub);
        return d.y[i] - d.X.row(i).dot(f.estimates);
    } catch (const NumericalError&) {
        return std::nullopt;
    }
}

} // namespace

PressResult loocv_press_refit(const Design& d, Exec exec)
{
    const auto n = d.rows();
    std::vector<std::optional<double>> err(static_cast<std::size_t>(n));
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (Eigen::Index i = 0; i < n; ++i)
            err[i] = holdout_error(d, i);
    } else {
        for (Eigen::Index i = 0; i < n; ++i)
            err[i] = holdout_error(d, i);
    }
    PressResult out;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!err[i]) {
            out.excluded_rows.push_back(static_cast<int>(i));
            continue;
        }
        out.press += *err[i] * *err[i];
        ++out.used;
    }
    out.rmspe = out.used > 0 ? std::sqrt(out.press / out.used) : 0.0;
    return out;
}

} // namespace scarr::step1
