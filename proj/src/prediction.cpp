#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "scarr/error.hpp"
#include "scarr/prediction.hpp"
#include "scarr/text.hpp"

namespace scarr::prediction {

namespace {

constexpr double kZ95 = 1.96;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const Eigen::VectorXd& state_mean(const step2::StateEstimate& e, bool smoothed)
{
    return smoothed ? e.smooth_mean : e.filt_mean;
}

const Eigen::VectorXd& state_var(const step2::StateEstimate& e, bool smoothed)
{
    return smoothed ? e.smooth_var : e.filt_var;
}

step2::StateEstimate run_state(const step2::DlmParams& p, const step2::DlmInputs& in, const PredictOptions& o)
{
    return o.smoothed ? step2::kalman_smoother(p, in) : step2::kalman_filter(p, in);
}

Calendar dataset_calendar(const Dataset& ds)
{
    return Calendar::parse(ds.manifest.get("epoch", "1994-01-01"));
}

} // namespace

NewSiteTerms new_site_terms(const Dataset& ds, const step1::StepOneFit& fit, const std::vector<SiteRecord>& sites,
                            int T, Exec exec)
{
    const auto src = make_sources(ds, fit.radii);
    auto covs = site_covariates_batch(sites, src, exec);
    for (std::size_t j = 0; j < sites.size(); ++j)
        if (auto e = ds.elevation_m.find(sites[j].id); e != ds.elevation_m.end())
            covs[j].elevation_m = e->second;
    const auto cal = dataset_calendar(ds);
    NewSiteTerms out;
    const auto k = static_cast<Eigen::Index>(sites.size());
    out.ctilde.resize(T, k);
    out.cmaq.resize(T, k);
    std::vector<std::array<double, 4>> season(T);
    for (int t = 0; t < T; ++t)
        season[t] = seasonal_basis(day_dyr(cal, t + 1));
    for (Eigen::Index j = 0; j < k; ++j) {
        out.ids.push_back(sites[j].id);
        const auto& px = ds.cmaq.series(covs[j].cmaq_pixel);
        for (int t = 0; t < T; ++t) {
            out.ctilde(t, j) = step1::additive_bias_c_tilde(fit, covs[j], season[t]);
            const auto c = px.at(t + 1);
            out.cmaq(t, j) = c ? *c : kNaN;
        }
    }
    return out;
}

std::vector<SitePrediction> predict_sites(const step2::DlmParams& params, const step2::DlmInputs& in,
                                          const NewSiteTerms& sites, const PredictOptions& opts)
{
    const auto aug = step2::augment(in, sites.ids, sites.ctilde, sites.cmaq);
    const auto est = run_state(params, aug, opts);
    const auto& m = state_mean(est, opts.smoothed);
    const auto& v = state_var(est, opts.smoothed);
    const double noise = opts.mean_only ? 0.0 : params.sigma_z * params.sigma_z;
    std::vector<SitePrediction> out;
    for (std::size_t j = 0; j < sites.ids.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        SitePrediction sp;
        sp.site_id = sites.ids[j];
        for (int t = 0; t < in.T(); ++t) {
            const double c = sites.ctilde(t, col);
            const double x = sites.cmaq(t, col);
            if (!std::isfinite(c) || !std::isfinite(x))
                throw DataError("prediction: site '" + sp.site_id + "' lacks ctilde or CMAQ on day " +
                                std::to_string(in.days[t]));
            sp.days.push_back(in.days[t]);
            sp.pred.push_back(m[t] + params.beta_c * c + params.gamma_hat * x);
            sp.half_width.push_back(kZ95 * std::sqrt(std::max(0.0, v[t] + noise)));
            ++sp.days_used;
        }
        out.push_back(std::move(sp));
    }
    return out;
}

SitePrediction predict_site(const step2::DlmParams& params, const step2::DlmInputs& in, const std::string& id,
                            const Eigen::VectorXd& ctilde, const Eigen::VectorXd& cmaq, const PredictOptions& opts)
{
    NewSiteTerms s;
    s.ids = {id};
    s.ctilde = ctilde;
    s.cmaq = cmaq;
    return predict_sites(params, in, s, opts).front();
}

Eigen::MatrixXd fitted_values(const step2::DlmParams& params, const step2::DlmInputs& in, const PredictOptions& opts)
{
    const auto est = run_state(params, in, opts);
    const auto& m = state_mean(est, opts.smoothed);
    Eigen::MatrixXd f(in.T(), in.n());
    for (int t = 0; t < in.T(); ++t)
        for (int i = 0; i < in.n(); ++i)
            f(t, i) = m[t] + params.beta_c * in.ctilde(t, i) + params.gamma_hat * in.cmaq(t, i);
    return f;
}

// ---------------------------------------------------------------------------
// Grid

namespace {

bool is_season_column(const std::string& c)
{
    return c == "sin2pi" || c == "cos2pi" || c == "sin4pi" || c == "cos4pi";
}

// One cell; nullopt when the cell cannot be predicted.
std::optional<std::pair<double, int>> cell_static(const Dataset& ds, const step1::StepOneFit& fit,
                                                  const CovariateSources& src, Point p)
{
    const int pixel = nearest_cmaq_centroid(p, ds.cmaq);
    if (!ds.cmaq.covers(p, pixel))
        return std::nullopt;
    try {
        const auto cov = site_covariates("cell", p, src);
        const std::array<double, 4> zero{};
        double s = 0.0;
        for (std::size_t i = 0; i < fit.columns.size(); ++i) {
            const auto& c = fit.columns[i];
            if (c == "cmaq" || is_season_column(c))
                continue;
            s += fit.estimates[static_cast<Eigen::Index>(i)] * step1::column_value(c, cov, zero, fit.radii);
        }
        return std::make_pair(s, pixel);
    } catch (const DataError&) {
        return std::nullopt;
    }
}

} // namespace

GridStatic grid_static_terms(const Dataset& ds, const step1::StepOneFit& fit, const RasterGrid& mask, Exec exec)
{
    if (fit.coefficient("elevation"))
        throw DataError("grid prediction: the fit uses elevation, which is not available for grid cells");
    const auto src = make_sources(ds, fit.radii);
    GridStatic g;
    g.mask = mask;
    const auto n = static_cast<long long>(mask.size());
    g.static_term.assign(mask.size(), kNaN);
    g.pixel.assign(mask.size(), 0);
    g.valid.assign(mask.size(), 0);
    auto one = [&](long long k) {
        const int r = static_cast<int>(k / mask.n_cols);
        const int c = static_cast<int>(k % mask.n_cols);
        if (mask.is_nodata(mask.at(r, c)))
            return;
        if (auto v = cell_static(ds, fit, src, mask.cell_center(r, c))) {
            g.static_term[k] = v->first;
            g.pixel[k] = v->second;
            g.valid[k] = 1;
        }
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (long long k = 0; k < n; ++k)
            one(k);
    } else {
        for (long long k = 0; k < n; ++k)
            one(k);
    }
    g.invalid_cells = static_cast<int>(std::count(g.valid.begin(), g.valid.end(), 0));
    return g;
}

double season_term(const step1::StepOneFit& fit, const std::array<double, 4>& season)
{
    static constexpr const char* kNames[] = {"sin2pi", "cos2pi", "sin4pi", "cos4pi"};
    double s = 0.0;
    for (int k = 0; k < 4; ++k)
        if (auto b = fit.coefficient(kNames[k]))
            s += *b * season[k];
    return s;
}

GridDay predict_grid_day(const Dataset& ds, const step1::StepOneFit& fit, const step2::DlmParams& params,
                         const step2::StateEstimate& state, const GridStatic& grid, int day,
                         const PredictOptions& opts, Exec exec)
{
    const auto& m = state_mean(state, opts.smoothed);
    const auto& v = state_var(state, opts.smoothed);
    if (day < 1 || day > m.size())
        throw ConfigError("grid prediction: day " + std::to_string(day) + " outside the fitted period");
    const int t = day - 1;
    GridDay out;
    out.day = day;
    const double noise = opts.mean_only ? 0.0 : params.sigma_z * params.sigma_z;
    out.half_width = kZ95 * std::sqrt(std::max(0.0, v[t] + noise));
    const double season = season_term(fit, seasonal_basis(day_dyr(dataset_calendar(ds), day)));
    out.raster = grid.mask;
    auto& r = out.raster;
    const auto n = static_cast<long long>(r.size());
    auto one = [&](long long k) {
        r.values[k] = r.nodata_value;
        if (!grid.valid[k])
            return;
        const auto x = ds.cmaq.series(grid.pixel[k]).at(day);
        if (!x)
            return;
        r.values[k] = m[t] + params.beta_c * (grid.static_term[k] + season) + params.gamma_hat * *x;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for
        for (long long k = 0; k < n; ++k)
            one(k);
    } else {
        for (long long k = 0; k < n; ++k)
            one(k);
    }
    return out;
}

std::vector<GridDay> predict_grid(const Dataset& ds, const step1::StepOneFit& fit, const step2::DlmParams& params,
                                  const step2::DlmInputs& in, const RasterGrid& mask, int first_day, int last_day,
                                  const PredictOptions& opts, Exec exec)
{
    if (first_day > last_day)
        throw ConfigError("grid prediction: empty day range");
    const auto grid = grid_static_terms(ds, fit, mask, exec);
    const auto state = run_state(params, in, opts);
    std::vector<GridDay> out;
    for (int d = first_day; d <= last_day; ++d)
        out.push_back(predict_grid_day(ds, fit, params, state, grid, d, opts, exec));
    return out;
}

std::string grid_file_name(int day)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "no2_day%04d.asc", day);
    return buf;
}

// ---------------------------------------------------------------------------
// Metrics

std::optional<double> pearson_r(const std::vector<double>& a, const std::vector<double>& b)
{
    const std::size_t n = a.size();
    if (n < 2 || b.size() != n)
        return std::nullopt;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0)
        return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mean_squared_error(const std::vector<double>& pred, const std::vector<double>& obs)
{
    if (pred.empty() || pred.size() != obs.size())
        throw DataError("mean squared error: no overlapping values");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
    return s / static_cast<double>(pred.size());
}

SiteMetric site_metric(const std::string& id, const std::vector<double>& pred, const std::vector<double>& obs,
                       const std::vector<double>& cmaq)
{
    std::vector<double> p, o, c;
    for (std::size_t t = 0; t < obs.size() && t < pred.size(); ++t) {
        if (std::isnan(obs[t]) || std::isnan(pred[t]) || (t < cmaq.size() && std::isnan(cmaq[t])))
            continue;
        p.push_back(pred[t]);
        o.push_back(obs[t]);
        c.push_back(t < cmaq.size() ? cmaq[t] : kNaN);
    }
    if (o.empty())
        throw DataError("metrics: site '" + id + "' has no overlapping observations");
    SiteMetric m;
    m.site_id = id;
    m.n = static_cast<int>(o.size());
    m.r = pearson_r(p, o);
    m.mse = mean_squared_error(p, o);
    if (cmaq.size() >= obs.size()) {
        m.r_cmaq = pearson_r(c, o);
        m.mse_cmaq = mean_squared_error(c, o);
    }
    return m;
}

namespace {

std::string opt(const std::optional<double>& v)
{
    return v ? format_number(*v) : "NA";
}

} // namespace

std::string metrics_csv(const MetricsReport& report, const std::string& comment)
{
    std::ostringstream os;
    if (!comment.empty())
        os << comment << '\n';
    os << "site_id,r,mse,r_cmaq,mse_cmaq\n";
    for (const auto& s : report.sites)
        os << s.site_id << ',' << opt(s.r) << ',' << format_number(s.mse) << ',' << opt(s.r_cmaq) << ','
           << format_number(s.mse_cmaq) << '\n';
    os << "MSPE,NA," << opt(report.mspe) << ",NA," << opt(report.mspe_cmaq) << '\n';
    return os.str();
}

std::string site_predictions_csv(const std::vector<SitePrediction>& preds, const std::string& comment)
{
    std::ostringstream os;
    if (!comment.empty())
        os << comment << '\n';
    os << "site_id,day,pred,ci_lo,ci_hi\n";
    for (const auto& p : preds)
        for (std::size_t t = 0; t < p.days.size(); ++t)
            os << p.site_id << ',' << p.days[t] << ',' << format_number(p.pred[t]) << ','
               << format_number(p.pred[t] - p.half_width[t]) << ',' << format_number(p.pred[t] + p.half_width[t])
               << '\n';
    return os.str();
}

MetricsReport evaluate(const Dataset& ds, const step1::StepOneFit& fit, const step2::DlmParams& params,
                       const step2::DlmInputs& in, const PredictOptions& opts,
                       std::vector<SitePrediction>* site_predictions, Exec exec)
{
    // Dense sites are re-predicted as new locations (their own values
    // withheld from the added column only), which reproduces their fitted
    // means; interval sites follow.
    std::vector<SiteRecord> sites;
    for (const auto& id : in.site_ids) {
        const auto* s = ds.find_site(id);
        if (!s)
            throw DataError("metrics: unknown site '" + id + "'");
        sites.push_back(*s);
    }
    const bool have_prediction_sites =
        std::any_of(ds.interval_obs.begin(), ds.interval_obs.end(), [&](const IntervalObservation& o) {
            const auto* s = ds.find_site(o.site_id);
            return s && s->role == SiteRole::prediction;
        });
    const SiteRole target = have_prediction_sites ? SiteRole::prediction : SiteRole::calibration;
    std::set<std::string> seen(in.site_ids.begin(), in.site_ids.end());
    for (const auto& o : ds.interval_obs) {
        const auto* s = ds.find_site(o.site_id);
        if (s && s->role == target && seen.insert(s->id).second)
            sites.push_back(*s);
    }

    const auto terms = new_site_terms(ds, fit, sites, in.T(), exec);
    const auto preds = predict_sites(params, in, terms, opts);

    MetricsReport rep;
    for (int i = 0; i < in.n(); ++i) {
        std::vector<double> obs(in.T()), cm(in.T());
        for (int t = 0; t < in.T(); ++t) {
            obs[t] = in.y(t, i);
            cm[t] = in.cmaq(t, i);
        }
        rep.sites.push_back(site_metric(in.site_ids[i], preds[i].pred, obs, cm));
    }

    double sum = 0, sum_cmaq = 0;
    for (const auto& o : ds.interval_obs) {
        const auto* s = ds.find_site(o.site_id);
        if (!s || s->role != target)
            continue;
        const auto it = std::find_if(preds.begin() + in.n(), preds.end(),
                                     [&](const SitePrediction& p) { return p.site_id == o.site_id; });
        if (o.t_start < 1 || o.t_end > in.T())
            throw DataError("metrics: interval of site '" + o.site_id + "' lies outside the fitted period");
        double pm = 0;
        for (int d = o.t_start; d <= o.t_end; ++d)
            pm += it->pred[d - 1];
        pm /= o.length();
        const auto j = static_cast<Eigen::Index>(it - preds.begin()) - in.n();
        double cm = 0;
        int cn = 0;
        for (int d = o.t_start; d <= o.t_end; ++d)
            if (!std::isnan(terms.cmaq(d - 1, j))) {
                cm += terms.cmaq(d - 1, j);
                ++cn;
            }
        sum += (pm - o.value) * (pm - o.value);
        if (cn > 0)
            sum_cmaq += (cm / cn - o.value) * (cm / cn - o.value);
        ++rep.mspe_count;
    }
    if (rep.mspe_count > 0) {
        rep.mspe = sum / rep.mspe_count;
        rep.mspe_cmaq = sum_cmaq / rep.mspe_count;
    }
    if (site_predictions)
        *site_predictions = preds;
    return rep;
}

} // namespace scarr::prediction
