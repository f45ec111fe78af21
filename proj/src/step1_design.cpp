#include <algorithm>
#include <cmath>

#include "scarr/error.hpp"
#include "scarr/step1.hpp"
#include "scarr/text.hpp"

namespace scarr::step1 {

int Design::column_index(const std::string& name) const
{
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

std::string to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::independent: return "independent";
    case ErrorKind::spherical: return "spherical";
    case ErrorKind::exponential: return "exponential";
    case ErrorKind::matern: return "matern";
    }
    return "independent";
}

ErrorKind parse_error_kind(const std::string& s)
{
    if (s == "independent")
        return ErrorKind::independent;
    if (s == "spherical")
        return ErrorKind::spherical;
    if (s == "exponential")
        return ErrorKind::exponential;
    if (s == "matern")
        return ErrorKind::matern;
    throw ConfigError("unknown error model '" + s + "'");
}

BufferSelection Step1Config::full_selection() const
{
    BufferSelection sel;
    sel.ttv_rings = radii.rings();
    for (auto c : landuse_categories)
        sel.landuse_rings[static_cast<int>(c)] = landuse_group_size();
    return sel;
}

namespace {

std::string combined_label(const BufferSpec& radii)
{
    const auto lu = radii.first(3);
    return "0-" + format_number(lu.radii_km.back());
}

int label_index(const std::string& label, const BufferSpec& spec)
{
    for (std::size_t k = 0; k < spec.rings(); ++k)
        if (spec.ring_label(k) == label)
            return static_cast<int>(k);
    return -1;
}

} // namespace

std::vector<std::string> design_columns(const Step1Config& cfg, const BufferSelection& sel)
{
    std::vector<std::string> cols = {"intercept", "pop_density", "sin2pi", "cos2pi", "sin4pi", "cos4pi"};
    if (cfg.use_elevation)
        cols.push_back("elevation");
    for (std::size_t k = 0; k < sel.ttv_rings; ++k)
        cols.push_back("ttv_" + cfg.radii.ring_label(k));
    const auto lu = cfg.radii.first(3);
    for (int c = 0; c < 3; ++c) {
        const auto n = sel.landuse_rings[c];
        if (n == 0)
            continue;
        const std::string base = std::string("lu_") + kLanduseNames[c] + "_";
        if (cfg.landuse_mode == LanduseMode::combined)
            cols.push_back(base + combined_label(cfg.radii));
        else
            for (std::size_t k = 0; k < n; ++k)
                cols.push_back(base + lu.ring_label(k));
    }
    cols.push_back("cmaq");
    return cols;
}

double column_value(const std::string& col, const SiteCovariates& s, const std::array<double, 4>& season,
                    const BufferSpec& radii, std::optional<double> cmaq)
{
    if (col == "intercept")
        return 1.0;
    if (col == "pop_density")
        return s.pop_density / 10000.0;
    if (col == "sin2pi")
        return season[0];
    if (col == "cos2pi")
        return season[1];
    if (col == "sin4pi")
        return season[2];
    if (col == "cos4pi")
        return season[3];
    if (col == "elevation") {
        if (!s.elevation_m)
            throw DataError("no elevation for '" + s.site_id + "'");
        return *s.elevation_m;
    }
    if (col == "cmaq") {
        if (!cmaq)
            throw DataError("no CMAQ value for '" + s.site_id + "'");
        return *cmaq;
    }
    if (col.rfind("ttv_", 0) == 0) {
        const auto rest = col.substr(4);
        for (std::size_t q = 0; q < 4; ++q) {
            const std::string prefix = std::string(kQuadrantNames[q]) + "_";
            if (rest.rfind(prefix, 0) == 0) {
                const int k = label_index(rest.substr(prefix.size()), radii);
                if (k < 0 || static_cast<std::size_t>(k) >= s.ttv_quadrant[q].size())
                    throw DataError("unknown column '" + col + "'");
                return s.ttv_quadrant[q][k];
            }
        }
        const int k = label_index(rest, radii);
        if (k < 0 || static_cast<std::size_t>(k) >= s.ttv.size())
            throw DataError("unknown column '" + col + "'");
        return s.ttv[k];
    }
    if (col.rfind("lu_", 0) == 0) {
        for (int c = 0; c < 3; ++c) {
            const std::string prefix = std::string("lu_") + kLanduseNames[c] + "_";
            if (col.rfind(prefix, 0) != 0)
                continue;
            const auto label = col.substr(prefix.size());
            const auto& h = s.landuse.hectares[c];
            if (label == combined_label(radii))
                return s.landuse.combined(static_cast<LanduseCategory>(c)) / 1000.0;
            const int k = label_index(label, radii.first(3));
            if (k < 0 || static_cast<std::size_t>(k) >= h.size())
                throw DataError("unknown column '" + col + "'");
            return h[k] / 1000.0;
        }
    }
    throw DataError("unknown design column '" + col + "'");
}

Design assemble_design(const Dataset& ds, const std::vector<CovariateRow>& rows,
                       const std::vector<std::string>& columns, const BufferSpec& radii)
{
    Design d;
    d.columns = columns;
    d.radii = radii;
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (const auto& obs : ds.interval_obs) {
        const auto* site = ds.find_site(obs.site_id);
        if (!site || site->role != SiteRole::calibration)
            continue;
        auto it = std::find_if(rows.begin(), rows.end(), [&](const CovariateRow& r) {
            return r.site.site_id == obs.site_id && r.t_start == obs.t_start && r.t_end == obs.t_end;
        });
        if (it == rows.end()) {
            d.warnings.push_back("site '" + obs.site_id + "': no covariates for interval [" +
                                 std::to_string(obs.t_start) + "," + std::to_string(obs.t_end) +
                                 "], observation dropped");
            continue;
        }
        std::vector<double> x;
        x.reserve(columns.size());
        try {
            for (const auto& c : columns)
                x.push_back(column_value(c, it->site, it->season, radii, it->cmaq_mean));
        } catch (const DataError& e) {
            d.warnings.push_back("site '" + obs.site_id + "': " + e.what() + ", observation dropped");
            continue;
        }
        xs.push_back(std::move(x));
        ys.push_back(obs.value);
        d.row_sites.push_back(obs.site_id);
        d.locations.push_back(site->location());
    }
    const auto n = static_cast<Eigen::Index>(xs.size());
    const auto p = static_cast<Eigen::Index>(columns.size());
    d.X.resize(n, p);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < p; ++j)
            d.X(i, j) = xs[i][j];
        d.y[i] = ys[i];
    }
    if (n > 0 && p > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.X);
        if (qr.rank() < p) {
            d.rank_deficient = true;
            d.warnings.push_back("design is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                                 std::to_string(p) + " columns)");
        }
    }
    return d;
}

Design assemble_design(const Dataset& ds, const std::vector<CovariateRow>& rows, const Step1Config& cfg,
                       const BufferSelection& sel)
{
    return assemble_design(ds, rows, design_columns(cfg, sel), cfg.radii);
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b)
{
    const std::size_t n = a.size();
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
        return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace

std::vector<Collinearity> landuse_collinearity(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                               double threshold)
{
    std::array<std::vector<double>, 3> agg;
    for (const auto& r : rows) {
        if (!r.t_start)
            continue;
        const auto* site = ds.find_site(r.site.site_id);
        if (!site || site->role != SiteRole::calibration)
            continue;
        for (int c = 0; c < 3; ++c)
            agg[c].push_back(r.site.landuse.combined(static_cast<LanduseCategory>(c)));
    }
    std::vector<Collinearity> out;
    if (agg[0].size() < 3)
        return out;
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
            const double r = pearson(agg[a], agg[b]);
            if (std::abs(r) > threshold)
                out.push_back({kLanduseNames[a], kLanduseNames[b], r});
        }
    return out;
}

} // namespace scarr::step1
