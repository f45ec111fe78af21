#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "scarr/covariates.hpp"
#include "scarr/error.hpp"
#include "scarr/oracle.hpp"
#include "scarr/rng.hpp"
#include "scarr/text.hpp"

namespace scarr::oracle {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSquareMetresPerMi2 = 2589988.110336;

Eigen::VectorXd simulate_state(Rng& rng, int T, const step2::DlmParams& p)
{
    Eigen::VectorXd A(T);
    const double v0 = p.sigma_a * p.sigma_a / (1.0 - p.psi_a * p.psi_a);
    A[0] = p.mu_a + std::sqrt(v0) * rng.normal();
    for (int t = 1; t < T; ++t)
        A[t] = p.mu_a + p.psi_a * (A[t - 1] - p.mu_a) + p.sigma_a * rng.normal();
    return A;
}

} // namespace

SimulatedSeries simulate_step2_series(const SeriesConfig& cfg)
{
    cfg.truth.validate();
    if (cfg.T < 1 || cfg.n < 1)
        throw ConfigError("simulate_step2_series: T and n must be positive");
    if (!(cfg.missing_rate >= 0 && cfg.missing_rate < 1))
        throw ConfigError("simulate_step2_series: missing_rate must lie in [0,1)");
    Rng rng(cfg.seed);
    SimulatedSeries out;
    out.A = simulate_state(rng, cfg.T, cfg.truth);

    auto& in = out.inputs;
    in.y.resize(cfg.T, cfg.n);
    in.ctilde.resize(cfg.T, cfg.n);
    in.cmaq.resize(cfg.T, cfg.n);
    std::vector<double> level(cfg.n), phase(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        level[i] = cfg.ctilde_mean + cfg.ctilde_site_sd * rng.normal();
        phase[i] = rng.uniform(0.0, kTwoPi);
        in.site_ids.push_back("S" + std::to_string(i + 1));
    }
    for (int t = 0; t < cfg.T; ++t) {
        in.days.push_back(t + 1);
        for (int i = 0; i < cfg.n; ++i) {
            in.ctilde(t, i) = level[i] + cfg.ctilde_season_amp * std::sin(kTwoPi * (t + 1) / 365.0 + phase[i]);
            in.cmaq(t, i) = std::max(1.0, cfg.cmaq_mean + cfg.cmaq_sd * rng.normal());
            const double noise = cfg.truth.sigma_z * rng.normal();
            const bool missing = rng.bernoulli(cfg.missing_rate);
            in.y(t, i) = missing ? std::numeric_limits<double>::quiet_NaN()
                                 : out.A[t] + cfg.truth.beta_c * in.ctilde(t, i) +
                                       cfg.truth.gamma_hat * in.cmaq(t, i) + noise;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Configuration text

namespace {

double* step1_field(SimulationConfig& c, const std::string& key)
{
    if (key == "intercept") return &c.step1.intercept;
    if (key == "pop_density_coef") return &c.step1.pop_density;
    if (key == "forest_coef") return &c.step1.forest;
    if (key == "developed_coef") return &c.step1.developed;
    if (key == "elevation_coef") return &c.step1.elevation;
    if (key == "gamma") return &c.step1.gamma;
    if (key == "noise_sd") return &c.step1.noise_sd;
    if (key == "sigma_z") return &c.step2.sigma_z;
    if (key == "sigma_a") return &c.step2.sigma_a;
    if (key == "psi_a") return &c.step2.psi_a;
    if (key == "mu_a") return &c.step2.mu_a;
    if (key == "beta_c") return &c.step2.beta_c;
    if (key == "domain_m") return &c.domain_m;
    if (key == "site_margin_m") return &c.site_margin_m;
    if (key == "cmaq_cell_m") return &c.cmaq_cell_m;
    if (key == "landuse_cell_m") return &c.landuse_cell_m;
    if (key == "mask_cell_m") return &c.mask_cell_m;
    if (key == "mask_window_m") return &c.mask_window_m;
    if (key == "missing_rate") return &c.missing_rate;
    return nullptr;
}

int* int_field(SimulationConfig& c, const std::string& key)
{
    if (key == "days") return &c.T;
    if (key == "n_calibration") return &c.n_calibration;
    if (key == "n_dense") return &c.n_dense;
    if (key == "n_prediction") return &c.n_prediction;
    if (key == "interval_min_days") return &c.interval_min_days;
    if (key == "interval_max_days") return &c.interval_max_days;
    if (key == "intervals_per_site") return &c.intervals_per_site;
    if (key == "n_roads") return &c.n_roads;
    if (key == "n_urban_centres") return &c.n_urban_centres;
    if (key == "tracts_per_side") return &c.tracts_per_side;
    return nullptr;
}

constexpr const char* kDoubleKeys[] = {"intercept", "pop_density_coef", "forest_coef", "developed_coef",
                                       "elevation_coef", "gamma", "noise_sd", "sigma_z", "sigma_a", "psi_a",
                                       "mu_a", "beta_c", "domain_m", "site_margin_m", "cmaq_cell_m",
                                       "landuse_cell_m", "mask_cell_m", "mask_window_m", "missing_rate"};
constexpr const char* kIntKeys[] = {"days", "n_calibration", "n_dense", "n_prediction", "interval_min_days",
                                    "interval_max_days", "intervals_per_site", "n_roads", "n_urban_centres",
                                    "tracts_per_side"};

void validate(const SimulationConfig& c)
{
    auto need = [](bool ok, const std::string& what) {
        if (!ok)
            throw ConfigError("simulate: " + what);
    };
    need(c.T >= 1, "days must be positive");
    need(c.n_calibration >= 0 && c.n_dense >= 0 && c.n_prediction >= 0, "site counts must be non-negative");
    need(c.interval_min_days >= 1 && c.interval_max_days >= c.interval_min_days && c.interval_max_days <= c.T,
         "interval lengths must satisfy 1 <= min <= max <= days");
    need(c.intervals_per_site >= 1, "intervals_per_site must be positive");
    need(c.domain_m > 0 && c.cmaq_cell_m > 0 && c.landuse_cell_m > 0 && c.mask_cell_m > 0,
         "domain and cell sizes must be positive");
    const double nc = c.domain_m / c.cmaq_cell_m;
    need(std::abs(nc - std::round(nc)) < 1e-9 && nc >= 1, "domain_m must be a multiple of cmaq_cell_m");
    const double nl = c.domain_m / c.landuse_cell_m;
    need(std::abs(nl - std::round(nl)) < 1e-9, "domain_m must be a multiple of landuse_cell_m");
    need(c.site_margin_m >= 0 && 2 * c.site_margin_m < c.domain_m, "site_margin_m too large");
    need(c.mask_window_m > 0 && c.mask_window_m <= c.domain_m, "mask_window_m must lie in (0, domain_m]");
    need(c.n_roads >= 1 && c.n_urban_centres >= 1 && c.tracts_per_side >= 1, "geometry counts must be positive");
    need(c.missing_rate >= 0 && c.missing_rate < 1, "missing_rate must lie in [0,1)");
    need(c.step1.noise_sd >= 0, "noise_sd must be non-negative");
    need(c.step1.ttv.size() <= BufferSpec::standard().rings(), "at most 7 ttv coefficients");
    c.step2.validate();
    Calendar::parse(c.epoch);
}

} // namespace

void apply_simulation_option(SimulationConfig& cfg, const std::string& key, const std::string& value)
{
    if (key == "seed") {
        auto v = parse_int(value);
        if (!v || *v < 0)
            throw ConfigError("simulate.seed: expected a non-negative integer");
        cfg.seed = static_cast<std::uint64_t>(*v);
    } else if (key == "epoch") {
        cfg.epoch = value;
    } else if (key == "season_coef" || key == "ttv_coef") {
        std::vector<double> v;
        try {
            v = parse_number_list(value);
        } catch (const Error&) {
            throw ConfigError("simulate." + key + ": expected a comma-separated number list");
        }
        if (key == "season_coef") {
            if (v.size() != 4)
                throw ConfigError("simulate.season_coef: expected 4 values");
            std::copy(v.begin(), v.end(), cfg.step1.season.begin());
        } else {
            cfg.step1.ttv = v;
        }
    } else if (auto* d = step1_field(cfg, key)) {
        auto v = parse_double(value);
        if (!v || !std::isfinite(*v))
            throw ConfigError("simulate." + key + ": expected a number, got '" + value + "'");
        *d = *v;
    } else if (auto* i = int_field(cfg, key)) {
        auto v = parse_int(value);
        if (!v)
            throw ConfigError("simulate." + key + ": expected an integer, got '" + value + "'");
        *i = static_cast<int>(*v);
    } else {
        throw ConfigError("unknown key simulate." + key);
    }
    cfg.step2.gamma_hat = cfg.step1.gamma;
}

std::string simulation_config_text(const SimulationConfig& cfg)
{
    SimulationConfig c = cfg;
    std::ostringstream os;
    os << "seed=" << c.seed << '\n' << "epoch=" << c.epoch << '\n';
    for (const char* k : kDoubleKeys)
        os << k << '=' << format_number(*step1_field(c, k)) << '\n';
    for (const char* k : kIntKeys)
        os << k << '=' << *int_field(c, k) << '\n';
    os << "season_coef=" << join_numbers({c.step1.season.begin(), c.step1.season.end()}) << '\n';
    os << "ttv_coef=" << join_numbers(c.step1.ttv) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

std::string padded(const char* prefix, int i, int width)
{
    std::string n = std::to_string(i);
    return prefix + std::string(std::max(0, width - static_cast<int>(n.size())), '0') + n;
}

struct Bump {
    Point c;
    double radius;
    double height;
};

double field(const std::vector<Bump>& bumps, Point p)
{
    double u = 0.0;
    for (const auto& b : bumps) {
        const double dx = p.x - b.c.x, dy = p.y - b.c.y;
        u += b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
    }
    return u;
}

// Straight road through a random point, clipped to the domain and bent
// slightly at interior vertices.
TrafficPolyline make_road(Rng& rng, const std::string& id, double L)
{
    const Point c{rng.uniform(0.0, L), rng.uniform(0.0, L)};
    const double th = rng.uniform(0.0, std::numbers::pi);
    const double dx = std::cos(th), dy = std::sin(th);
    double t0 = -1e300, t1 = 1e300;
    auto clip = [&](double p0, double d) {
        if (std::abs(d) < 1e-12)
            return;
        double a = (0.0 - p0) / d, b = (L - p0) / d;
        if (a > b)
            std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
    };
    clip(c.x, dx);
    clip(c.y, dy);
    TrafficPolyline line;
    line.id = id;
    constexpr int kPieces = 4;
    for (int k = 0; k <= kPieces; ++k) {
        const double t = t0 + (t1 - t0) * k / kPieces;
        const double jitter = (k == 0 || k == kPieces) ? 0.0 : rng.uniform(-150.0, 150.0);
        line.vertices.push_back({std::clamp(c.x + t * dx - jitter * dy, 0.0, L),
                                 std::clamp(c.y + t * dy + jitter * dx, 0.0, L)});
    }
    line.adt = std::round(std::exp(std::log(12000.0) + 0.7 * rng.normal()));
    return line;
}

double regression_mean(const Step1Truth& tr, const SiteCovariates& s, const std::array<double, 4>& season)
{
    double m = tr.intercept + tr.pop_density * s.pop_density / 10000.0;
    for (int k = 0; k < 4; ++k)
        m += tr.season[k] * season[k];
    for (std::size_t k = 0; k < tr.ttv.size(); ++k)
        m += tr.ttv[k] * s.ttv[k];
    m += tr.forest * s.landuse.combined(LanduseCategory::forest) / 1000.0;
    m += tr.developed * s.landuse.combined(LanduseCategory::developed) / 1000.0;
    if (s.elevation_m)
        m += tr.elevation * *s.elevation_m;
    return m;
}

} // namespace

SimulatedDataset simulate_step1_dataset(const SimulationConfig& cfg_in)
{
    SimulationConfig cfg = cfg_in;
    cfg.step2.gamma_hat = cfg.step1.gamma;
    validate(cfg);
    Rng rng(cfg.seed);
    const double L = cfg.domain_m;
    SimulatedDataset out;
    Dataset& ds = out.dataset;
    ds.provenance = header_comment(hex64(fnv1a64(simulation_config_text(cfg)))).substr(2);
    ds.manifest.entries["epoch"] = cfg.epoch;
    ds.manifest.entries["days"] = std::to_string(cfg.T);
    ds.manifest.entries["cmaq_cell_size"] = format_number(cfg.cmaq_cell_m);
    ds.manifest.entries["generator"] = "scarr-simulate";
    ds.manifest.entries["seed"] = std::to_string(cfg.seed);

    // Sites.
    auto place = [&](const char* prefix, int count, SiteRole role) {
        for (int i = 1; i <= count; ++i) {
            SiteRecord s;
            s.id = padded(prefix, i, 3);
            s.x = std::round(rng.uniform(cfg.site_margin_m, L - cfg.site_margin_m));
            s.y = std::round(rng.uniform(cfg.site_margin_m, L - cfg.site_margin_m));
            s.role = role;
            ds.sites.push_back(s);
            ds.elevation_m[s.id] = std::round(rng.uniform(0.0, 300.0));
        }
    };
    place("C", cfg.n_calibration, SiteRole::calibration);
    place("D", cfg.n_dense, SiteRole::dense_time);
    place("P", cfg.n_prediction, SiteRole::prediction);

    // Roads and smooth fields.
    for (int r = 1; r <= cfg.n_roads; ++r)
        ds.traffic.push_back(make_road(rng, padded("R", r, 3), L));
    std::vector<Bump> urban, forest;
    for (int k = 0; k < cfg.n_urban_centres; ++k)
        urban.push_back({{rng.uniform(0.2 * L, 0.8 * L), rng.uniform(0.2 * L, 0.8 * L)},
                         rng.uniform(0.06 * L, 0.12 * L), rng.uniform(0.7, 1.0)});
    for (int k = 0; k < 8; ++k)
        forest.push_back({{rng.uniform(0.0, L), rng.uniform(0.0, L)}, rng.uniform(0.05 * L, 0.12 * L), 1.0});

    // Land use.
    {
        const int n = static_cast<int>(std::round(L / cfg.landuse_cell_m));
        RasterGrid lu(n, n, 0.0, 0.0, cfg.landuse_cell_m, -9999.0);
        static constexpr int kDeveloped[] = {21, 22, 23};
        static constexpr int kForest[] = {41, 42, 43};
        static constexpr int kOther[] = {11, 31, 33, 51, 61, 91};
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const Point p = lu.cell_center(r, c);
                const double u = field(urban, p) + 0.25 * rng.normal();
                const double f = field(forest, p) + 0.25 * rng.normal();
                int code;
                if (u > 0.5)
                    code = kDeveloped[u > 0.9 ? 2 : u > 0.7 ? 1 : 0];
                else if (f > 0.4)
                    code = kForest[rng.uniform_int(0, 2)];
                else
                    code = kOther[rng.uniform_int(0, 5)];
                lu.at(r, c) = code;
            }
        ds.landuse = std::move(lu);
        ds.landuse_reclass = default_nlcd92_reclass();
    }

    // Census tracts.
    {
        const int m = cfg.tracts_per_side;
        const double side = L / m;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                TractPolygon t;
                t.id = padded("T", r * m + c + 1, 3);
                const double x0 = c * side, y0 = r * side;
                t.ring = {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
                t.area_mi2 = side * side / kSquareMetresPerMi2;
                const double density = 300.0 + 9000.0 * field(urban, {x0 + side / 2, y0 + side / 2}) *
                                                   rng.uniform(0.8, 1.2);
                t.population = std::round(density * t.area_mi2);
                ds.tracts.push_back(std::move(t));
            }
    }

    // CMAQ pixels and daily fields.
    const auto cal = Calendar::parse(cfg.epoch);
    {
        const int m = static_cast<int>(std::round(L / cfg.cmaq_cell_m));
        ds.cmaq.cell_size = cfg.cmaq_cell_m;
        std::vector<double> common(cfg.T);
        double g = 0.0;
        for (int t = 0; t < cfg.T; ++t) {
            g = 0.7 * g + 4.0 * rng.normal();
            common[t] = g;
        }
        int id = 1;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c, ++id) {
                CmaqPixel px{id, (c + 0.5) * cfg.cmaq_cell_m, L - (r + 0.5) * cfg.cmaq_cell_m};
                ds.cmaq.pixels.push_back(px);
                const double base = 18.0 + 10.0 * field(urban, {px.x, px.y});
                DailySeries s;
                s.id = std::to_string(id);
                for (int t = 0; t < cfg.T; ++t) {
                    const double doy = cal.day_of_year(t + 1);
                    const double v = base + 5.0 * std::sin(kTwoPi * doy / 365.0 + 1.0) + common[t] + 2.0 * rng.normal();
                    s.values.push_back({t + 1, std::round(std::max(0.5, v) * 1000.0) / 1000.0});
                }
                ds.cmaq.daily[id] = std::move(s);
            }
    }

    // Covariates of every site under the generating geometry.
    const auto src = make_sources(ds, BufferSpec::standard());
    const auto covs = site_covariates_batch(ds.sites, src, Exec::serial);

    out.A = simulate_state(rng, cfg.T, cfg.step2);
    auto ctilde_true = [&](const SiteCovariates& s, int day) {
        return regression_mean(cfg.step1, s, seasonal_basis(day_dyr(cal, day)));
    };
    auto daily_truth = [&](const SiteCovariates& s, int day) {
        const double x = *ds.cmaq.series(s.cmaq_pixel).at(day);
        return out.A[day - 1] + cfg.step2.beta_c * ctilde_true(s, day) + cfg.step1.gamma * x +
               cfg.step2.sigma_z * rng.normal();
    };

    for (std::size_t k = 0; k < ds.sites.size(); ++k) {
        const auto& site = ds.sites[k];
        const auto& cv = covs[k];
        if (site.role == SiteRole::calibration) {
            for (int j = 0; j < cfg.intervals_per_site; ++j) {
                const int len = static_cast<int>(rng.uniform_int(cfg.interval_min_days, cfg.interval_max_days));
                const int start = static_cast<int>(rng.uniform_int(1, cfg.T - len + 1));
                const int end = start + len - 1;
                const auto cm = interval_mean(ds.cmaq.series(cv.cmaq_pixel), start, end);
                const double mean = regression_mean(cfg.step1, cv, seasonal_basis(interval_dyr(cal, start, end))) +
                                    cfg.step1.gamma * *cm.mean;
                ds.interval_obs.push_back({site.id, start, end, mean + cfg.step1.noise_sd * rng.normal()});
            }
        } else if (site.role == SiteRole::dense_time) {
            DailySeries s;
            s.id = site.id;
            for (int day = 1; day <= cfg.T; ++day) {
                const double v = daily_truth(cv, day);
                const bool missing = rng.bernoulli(cfg.missing_rate);
                s.values.push_back({day, missing ? std::nullopt : std::optional<double>(v)});
            }
            ds.daily_series.push_back(std::move(s));
        } else {
            for (int j = 0; j < cfg.intervals_per_site; ++j) {
                const int len = static_cast<int>(rng.uniform_int(cfg.interval_min_days, cfg.interval_max_days));
                const int start = static_cast<int>(rng.uniform_int(1, cfg.T - len + 1));
                double sum = 0.0;
                for (int day = start; day < start + len; ++day)
                    sum += daily_truth(cv, day);
                ds.interval_obs.push_back({site.id, start, start + len - 1, sum / len});
            }
        }
    }

    // Prediction mask: a centred window with a circular hole of nodata.
    {
        const int n = std::max(1, static_cast<int>(std::round(cfg.mask_window_m / cfg.mask_cell_m)));
        const double x0 = std::round((L - n * cfg.mask_cell_m) / 2.0);
        RasterGrid mask(n, n, x0, x0, cfg.mask_cell_m, -9999.0);
        const Point hole{x0 + 0.8 * n * cfg.mask_cell_m, x0 + 0.8 * n * cfg.mask_cell_m};
        const double hole_r = 0.12 * n * cfg.mask_cell_m;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const Point p = mask.cell_center(r, c);
                mask.at(r, c) = std::hypot(p.x - hole.x, p.y - hole.y) < hole_r ? mask.nodata_value : 1.0;
            }
        ds.prediction_mask = std::move(mask);
    }

    // Truth record.
    std::ostringstream tr;
    tr << simulation_config_text(cfg);
    tr << "A=" << join_numbers({out.A.data(), out.A.data() + out.A.size()}) << '\n';
    out.truth_text = tr.str();
    return out;
}

} // namespace scarr::oracle
