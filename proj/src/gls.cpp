#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>

#include "scarr/error.hpp"
#include "scarr/optimize.hpp"
#include "scarr/step1.hpp"

namespace scarr::step1 {

void ErrorModel::validate() const
{
    if (!(sill > 0) || !std::isfinite(sill))
        throw ConfigError("error model: sill must be positive");
    if (!(range >= 0) || !std::isfinite(range))
        throw ConfigError("error model: range must be non-negative");
    if (!(nugget >= 0) || !std::isfinite(nugget))
        throw ConfigError("error model: nugget must be non-negative");
    if (kind == ErrorKind::matern && !(smoothness > 0))
        throw ConfigError("error model: Matern smoothness must be positive");
}

namespace {

// Correlation part (unit sill, no nugget) at d > 0.
double correlation(ErrorKind kind, double range, double smoothness, double d)
{
    if (d == 0.0)
        return 1.0;
    if (kind == ErrorKind::independent || range == 0.0)
        return 0.0;
    const double h = d / range;
    switch (kind) {
    case ErrorKind::exponential:
        return std::exp(-h);
    case ErrorKind::spherical:
        return h <= 1.0 ? 1.0 - 1.5 * h + 0.5 * h * h * h : 0.0;
    case ErrorKind::matern: {
        if (h > 700.0)
            return 0.0;
        const double nu = smoothness;
        return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(h, nu) * std::cyl_bessel_k(nu, h);
    }
    case ErrorKind::independent:
        break;
    }
    return 0.0;
}

} // namespace

double cov_value(const ErrorModel& m, double d)
{
    m.validate();
    if (!(d >= 0))
        throw ConfigError("cov_value: distance must be non-negative");
    double c = m.sill * correlation(m.kind, m.range, m.smoothness, d);
    if (d == 0.0)
        c += m.nugget;
    return c;
}

namespace {

Eigen::MatrixXd distances(const std::vector<Point>& pts)
{
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd D(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            D(i, j) = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
    return D;
}

struct ProfileResult {
    double loglik = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd beta;
    double scale = 0.0;
    Eigen::MatrixXd xw_gram_inv;
};

ProfileResult profile(const Design& d, const Eigen::MatrixXd& D, ErrorKind kind, double range, double eta,
                      double nu)
{
    const auto n = d.rows();
    Eigen::MatrixXd V(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j)
            V(i, j) = V(j, i) = correlation(kind, range, nu, D(i, j));
        V(i, i) += eta;
    }
    ProfileResult out;
    Eigen::LLT<Eigen::MatrixXd> llt(V);
    if (llt.info() != Eigen::Success)
        return out;
    const Eigen::MatrixXd Xw = llt.matrixL().solve(d.X);
    const Eigen::VectorXd yw = llt.matrixL().solve(d.y);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    if (qr.rank() < d.cols())
        return out;
    out.beta = qr.solve(yw);
    const double s2 = (yw - Xw * out.beta).squaredNorm() / n;
    if (!(s2 > 0))
        return out;
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        logdet += 2.0 * std::log(llt.matrixL()(i, i));
    out.scale = s2;
    out.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * s2) + 1.0) - 0.5 * logdet;
    out.xw_gram_inv = (Xw.transpose() * Xw).inverse();
    return out;
}

} // namespace

double gls_profile_loglik(const Design& d, ErrorKind kind, double range, double eta, double nu,
                          Eigen::VectorXd* beta, double* scale)
{
    const auto r = profile(d, distances(d.locations), kind, range, eta, nu);
    if (beta)
        *beta = r.beta;
    if (scale)
        *scale = r.scale;
    return r.loglik;
}

StepOneFit fit_gls(const Design& d, ErrorKind kind, const GlsOptions& opts)
{
    if (kind == ErrorKind::independent)
        return fit_ols(d);
    const auto n = d.rows();
    if (n <= d.cols())
        throw NumericalError("fit_gls: need more rows than columns");
    if (static_cast<Eigen::Index>(d.locations.size()) != n)
        throw DataError("fit_gls: design rows lack locations");

    const Eigen::MatrixXd D = distances(d.locations);
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < i; ++j)
            if (D(i, j) > 0) {
                dmin = std::min(dmin, D(i, j));
                dmax = std::max(dmax, D(i, j));
            }
    {
        std::vector<std::pair<double, double>> uniq;
        for (const auto& p : d.locations)
            if (std::none_of(uniq.begin(), uniq.end(),
                             [&](const auto& u) { return u.first == p.x && u.second == p.y; }))
                uniq.emplace_back(p.x, p.y);
        if (uniq.size() < 3)
            throw DataError("fit_gls: fewer than 3 distinct locations, no spatial information");
    }

    const double nu = opts.smoothness;
    // Lower range bound: correlations at the closest pair underflow to zero,
    // so the model there is exactly the independent one.
    Eigen::Vector2d lo(std::log(dmin / 1000.0), std::log(1e-6));
    Eigen::Vector2d hi(std::log(3.0 * dmax), std::log(1e6));
    auto objective = [&](const Eigen::VectorXd& u) {
        return -profile(d, D, kind, std::exp(u[0]), std::exp(u[1]), nu).loglik;
    };

    const std::array<Eigen::Vector2d, 5> starts = {
        Eigen::Vector2d(lo[0], 0.0),
        Eigen::Vector2d(std::log(0.05 * dmax), std::log(10.0)),
        Eigen::Vector2d(std::log(0.1 * dmax), 0.0),
        Eigen::Vector2d(std::log(0.3 * dmax), std::log(0.1)),
        Eigen::Vector2d(std::log(dmax), 0.0),
    };
    OptimResult best;
    best.value = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    for (const auto& s : starts) {
        auto r = nelder_mead_box(objective, s, lo, hi, 0.5, 1e-12, opts.max_iter);
        any_converged = any_converged || r.converged;
        if (r.value < best.value)
            best = r;
    }
    if (!any_converged || !std::isfinite(best.value))
        throw NumericalError("fit_gls: likelihood optimisation did not converge from any start");

    const double range = std::exp(best.x[0]);
    const double eta = std::exp(best.x[1]);
    const auto pr = profile(d, D, kind, range, eta, nu);

    if (opts.boundary_alpha > 0.0) {
        auto ols = fit_ols(d);
        const double lr = 2.0 * (pr.loglik - ols.loglik);
        const boost::math::chi_squared chi2(2.0);
        if (!(lr > boost::math::quantile(chi2, 1.0 - opts.boundary_alpha))) {
            ols.error.kind = kind;
            ols.error.sill = ols.rss / static_cast<double>(n);
            ols.error.range = 0.0;
            ols.error.nugget = 0.0;
            ols.error.smoothness = kind == ErrorKind::matern ? nu : 0.5;
            return ols;
        }
    }

    StepOneFit fit;
    fit.columns = d.columns;
    fit.radii = d.radii;
    fit.n = static_cast<int>(n);
    fit.p = static_cast<int>(d.cols());
    fit.rank = fit.p;
    fit.estimates = pr.beta;
    fit.covariance = pr.scale * pr.xw_gram_inv;
    fit.fitted = d.X * fit.estimates;
    fit.residuals = d.y - fit.fitted;
    fit.rss = fit.residuals.squaredNorm();
    fit.tss = (d.y.array() - d.y.mean()).square().sum();
    fit.r2 = fit.tss > 0 ? 1.0 - fit.rss / fit.tss : 1.0;
    fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / static_cast<double>(n - fit.p);
    fit.rmse = std::sqrt(fit.rss / (fit.n - fit.p));
    fit.loglik = pr.loglik;
    fit.error.kind = kind;
    fit.error.sill = pr.scale;
    fit.error.range = range;
    fit.error.nugget = eta * pr.scale;
    fit.error.smoothness = kind == ErrorKind::matern ? nu : 0.5;
    return fit;
}

} // namespace scarr::step1
