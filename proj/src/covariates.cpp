#include "scarr/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "scarr/csv.hpp"
#include "scarr/error.hpp"
#include "scarr/text.hpp"

namespace scarr {

BufferSpec BufferSpec::standard()
{
    return {{0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0}};
}

void BufferSpec::validate() const
{
    if (radii_km.empty())
        throw ConfigError("buffer radii: at least one radius required");
    double prev = 0.0;
    for (double r : radii_km) {
        if (!(r > prev))
            throw ConfigError("buffer radii must be positive and strictly increasing");
        prev = r;
    }
}

BufferSpec BufferSpec::first(std::size_t n) const
{
    BufferSpec out;
    out.radii_km.assign(radii_km.begin(), radii_km.begin() + std::min(n, radii_km.size()));
    return out;
}

std::string BufferSpec::ring_label(std::size_t k) const
{
    const double inner = k == 0 ? 0.0 : radii_km[k - 1];
    return format_number(inner) + "-" + format_number(radii_km[k]);
}

int ring_index(double d_m, const BufferSpec& spec)
{
    if (d_m <= 0.0)
        return 0;
    for (std::size_t k = 0; k < spec.radii_km.size(); ++k)
        if (d_m <= spec.radii_km[k] * 1000.0)
            return static_cast<int>(k);
    return -1;
}

double polyline_length_m(const std::vector<Point>& v)
{
    double len = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i)
        len += std::hypot(v[i].x - v[i - 1].x, v[i].y - v[i - 1].y);
    return len;
}

namespace {

// Point at arc length `s` along the polyline; `cum` holds cumulative lengths.
Point point_at(const std::vector<Point>& v, const std::vector<double>& cum, double s)
{
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    std::size_t i = it == cum.begin() ? 0 : static_cast<std::size_t>(it - cum.begin()) - 1;
    if (i >= v.size() - 1)
        i = v.size() - 2;
    const double seg = cum[i + 1] - cum[i];
    const double f = seg > 0 ? (s - cum[i]) / seg : 0.0;
    return {v[i].x + f * (v[i + 1].x - v[i].x), v[i].y + f * (v[i + 1].y - v[i].y)};
}

} // namespace

std::vector<TrafficSegment> segmentize(const std::vector<TrafficPolyline>& lines, double target_len_m)
{
    if (!(target_len_m > 0))
        throw ConfigError("segmentize: target length must be positive");
    std::vector<TrafficSegment> out;
    for (const auto& line : lines) {
        const auto& v = line.vertices;
        if (v.size() < 2)
            throw DataError("polyline '" + line.id + "' has fewer than 2 vertices");
        std::vector<double> cum(v.size(), 0.0);
        for (std::size_t i = 1; i < v.size(); ++i)
            cum[i] = cum[i - 1] + std::hypot(v[i].x - v[i - 1].x, v[i].y - v[i - 1].y);
        const double total = cum.back();
        if (!(total > 0))
            throw DataError("polyline '" + line.id + "' has zero length");
        double start = 0.0;
        while (start < total) {
            double end = start + target_len_m;
            // a sliver below 1e-9 of a piece is rounding, not a residual
            if (end >= total - 1e-9 * target_len_m)
                end = total;
            TrafficSegment seg;
            seg.midpoint = point_at(v, cum, 0.5 * (start + end));
            seg.length_km = (end - start) / 1000.0;
            seg.adt = line.adt;
            out.push_back(seg);
            start = end;
        }
    }
    return out;
}

std::vector<double> ring_ttv(Point site, std::span<const TrafficSegment> sources, const BufferSpec& spec)
{
    std::vector<double> ttv(spec.rings(), 0.0);
    for (const auto& s : sources) {
        const int k = ring_index(std::hypot(s.midpoint.x - site.x, s.midpoint.y - site.y), spec);
        if (k >= 0)
            ttv[k] += s.volume();
    }
    for (auto& v : ttv)
        v /= 10000.0;
    return ttv;
}

Quadrant quadrant_of(double dx, double dy)
{
    if (dx > 0 && dy >= 0)
        return Quadrant::NE;
    if (dx <= 0 && dy > 0)
        return Quadrant::NW;
    if (dx < 0 && dy <= 0)
        return Quadrant::SW;
    if (dx >= 0 && dy < 0)
        return Quadrant::SE;
    return Quadrant::NE; // coincident with the site
}

QuadrantTable quadrant_ttv(Point site, std::span<const TrafficSegment> sources, const BufferSpec& spec)
{
    QuadrantTable table;
    for (auto& q : table)
        q.assign(spec.rings(), 0.0);
    for (const auto& s : sources) {
        const double dx = s.midpoint.x - site.x;
        const double dy = s.midpoint.y - site.y;
        const int k = ring_index(std::hypot(dx, dy), spec);
        if (k >= 0)
            table[static_cast<int>(quadrant_of(dx, dy))][k] += s.volume();
    }
    for (auto& q : table)
        for (auto& v : q)
            v /= 10000.0;
    return table;
}

LanduseCategory parse_landuse_category(const std::string& name)
{
    for (std::size_t i = 0; i < kLanduseNames.size(); ++i)
        if (name == kLanduseNames[i])
            return static_cast<LanduseCategory>(i);
    throw ConfigError("unknown land-use category '" + name + "'");
}

std::map<int, std::string> default_nlcd92_reclass()
{
    std::map<int, std::string> m;
    for (int c : {21, 22, 23})
        m[c] = "developed";
    for (int c : {41, 42, 43, 81, 82, 85})
        m[c] = "forest";
    for (int c : {11, 31, 32, 33, 51, 61, 91, 92})
        m[c] = "other";
    return m;
}

double LanduseAreas::combined(LanduseCategory c) const
{
    const auto& v = hectares[static_cast<int>(c)];
    double s = 0.0;
    for (double h : v)
        s += h;
    return s;
}

namespace {

// Area of the disc of radius R about the origin inside [x0,x1] x [y0,y1].
double disc_rect_area(double R, double x0, double x1, double y0, double y1)
{
    const double a = std::max(x0, -R), b = std::min(x1, R);
    if (a >= b || y0 >= R || y1 <= -R)
        return 0.0;
    auto half = [R](double x) { return std::sqrt(std::max(0.0, R * R - x * x)); };
    // Antiderivative of half(x).
    auto G = [R, &half](double x) { return 0.5 * (x * half(x) + R * R * std::asin(std::clamp(x / R, -1.0, 1.0))); };
    std::vector<double> cuts{a, b};
    for (double y : {y0, y1})
        if (std::abs(y) < R)
            for (double s : {-1.0, 1.0}) {
                const double x = s * std::sqrt(R * R - y * y);
                if (x > a && x < b)
                    cuts.push_back(x);
            }
    std::sort(cuts.begin(), cuts.end());
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        if (hi <= lo)
            continue;
        const double h = half(0.5 * (lo + hi));
        const bool top_is_arc = h < y1;
        const bool bottom_is_arc = -h > y0;
        if ((top_is_arc ? h : y1) <= (bottom_is_arc ? -h : y0))
            continue;
        const double arc = G(hi) - G(lo);
        area += (top_is_arc ? arc : y1 * (hi - lo)) - (bottom_is_arc ? -arc : y0 * (hi - lo));
    }
    return area;
}

} // namespace

LanduseAreas ring_landuse_area(Point site, const RasterGrid& raster,
                               const std::map<int, std::string>& reclass, const BufferSpec& rings)
{
    LanduseAreas out;
    for (auto& h : out.hectares)
        h.assign(rings.rings(), 0.0);
    std::map<int, int> category_of;
    for (const auto& [code, name] : reclass)
        category_of[code] = static_cast<int>(parse_landuse_category(name));

    const double outer = rings.radii_km.back() * 1000.0;
    const double cs = raster.cell_size;
    const int c0 = std::max(0, static_cast<int>(std::floor((site.x - outer - raster.x_ll) / cs)));
    const int c1 = std::min(raster.n_cols - 1, static_cast<int>(std::ceil((site.x + outer - raster.x_ll) / cs)));
    // rows count from the top edge
    const double y_top = raster.y_ll + raster.n_rows * cs;
    const int r0 = std::max(0, static_cast<int>(std::floor((y_top - (site.y + outer)) / cs)));
    const int r1 = std::min(raster.n_rows - 1, static_cast<int>(std::ceil((y_top - (site.y - outer)) / cs)));

    // Each cell contributes the part of its area lying inside each ring.
    std::vector<double> radii_m(rings.rings());
    for (std::size_t k = 0; k < rings.rings(); ++k)
        radii_m[k] = rings.radii_km[k] * 1000.0;
    std::vector<double> inside(rings.rings() + 1, 0.0);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double v = raster.at(r, c);
            if (raster.is_nodata(v))
                continue;
            const Point p = raster.cell_center(r, c);
            const double x0 = p.x - 0.5 * cs - site.x, x1 = x0 + cs;
            const double y0 = p.y - 0.5 * cs - site.y, y1 = y0 + cs;
            const double near_x = std::max({x0, -x1, 0.0}), near_y = std::max({y0, -y1, 0.0});
            if (std::hypot(near_x, near_y) >= outer)
                continue;
            const double far = std::hypot(std::max(std::abs(x0), std::abs(x1)), std::max(std::abs(y0), std::abs(y1)));
            const double near = std::hypot(near_x, near_y);
            for (std::size_t k = 0; k < radii_m.size(); ++k) {
                const double R = radii_m[k];
                inside[k + 1] = far <= R ? cs * cs : near >= R ? 0.0 : disc_rect_area(R, x0, x1, y0, y1);
            }
            const int code = static_cast<int>(std::lround(v));
            auto it = category_of.find(code);
            if (it == category_of.end())
                throw DataError("land-use code " + std::to_string(code) + " is absent from the reclass map");
            for (std::size_t k = 0; k < radii_m.size(); ++k)
                out.hectares[it->second][k] += (inside[k + 1] - inside[k]) / 10000.0;
        }
    }
    return out;
}

namespace {

bool on_segment(Point p, Point a, Point b)
{
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double tol = 1e-9 * std::max(1.0, len);
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (std::abs(cross) > tol * std::max(1.0, len))
        return false;
    const double dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    return dot >= -tol && dot <= len * len + tol;
}

} // namespace

bool point_in_polygon(Point p, const std::vector<Point>& ring)
{
    const std::size_t n = ring.size();
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point a = ring[i];
        const Point b = ring[j];
        if (on_segment(p, a, b))
            return true;
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross)
                inside = !inside;
        }
    }
    return inside;
}

std::optional<std::size_t> containing_tract(Point p, std::span<const TractPolygon> tracts)
{
    for (std::size_t i = 0; i < tracts.size(); ++i)
        if (point_in_polygon(p, tracts[i].ring))
            return i;
    return std::nullopt;
}

double population_density(Point site, std::span<const TractPolygon> tracts)
{
    auto idx = containing_tract(site, tracts);
    if (!idx)
        throw DataError("location (" + format_number(site.x) + ", " + format_number(site.y) +
                        ") is outside every census tract");
    const auto& t = tracts[*idx];
    return t.population / t.area_mi2;
}

std::array<double, 4> seasonal_basis(double dyr)
{
    if (!(dyr > 0.0 && dyr <= 1.0))
        throw DataError("DYR must lie in (0, 1], got " + format_number(dyr));
    const double w = 2.0 * std::numbers::pi * dyr;
    return {std::sin(w), std::cos(w), std::sin(2.0 * w), std::cos(2.0 * w)};
}

CovariateSources make_sources(const Dataset& ds, const BufferSpec& traffic_rings)
{
    traffic_rings.validate();
    CovariateSources src;
    src.segments = segmentize(ds.traffic);
    src.landuse = ds.landuse ? &*ds.landuse : nullptr;
    src.reclass = ds.landuse_reclass.empty() ? default_nlcd92_reclass() : ds.landuse_reclass;
    src.tracts = ds.tracts;
    src.cmaq = &ds.cmaq;
    src.traffic_rings = traffic_rings;
    src.landuse_rings = traffic_rings.first(3);
    return src;
}

SiteCovariates site_covariates(const std::string& id, Point p, const CovariateSources& src)
{
    if (!src.landuse)
        throw DataError("land-use raster is required to build covariates");
    if (src.tracts.empty())
        throw DataError("census tracts are required to build covariates");
    SiteCovariates out;
    out.site_id = id;
    out.ttv = ring_ttv(p, src.segments, src.traffic_rings);
    out.ttv_quadrant = quadrant_ttv(p, src.segments, src.traffic_rings);
    out.landuse = ring_landuse_area(p, *src.landuse, src.reclass, src.landuse_rings);
    out.pop_density = population_density(p, src.tracts);
    if (src.cmaq)
        out.cmaq_pixel = nearest_cmaq_centroid(p, *src.cmaq);
    return out;
}

std::vector<SiteCovariates> site_covariates_batch(std::span<const SiteRecord> sites,
                                                  const CovariateSources& src, Exec exec)
{
    const long long n = static_cast<long long>(sites.size());
    std::vector<SiteCovariates> out(sites.size());
    std::vector<std::string> errors(sites.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < n; ++i) {
            try {
                out[i] = site_covariates(sites[i].id, sites[i].location(), src);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    } else {
        for (long long i = 0; i < n; ++i) {
            try {
                out[i] = site_covariates(sites[i].id, sites[i].location(), src);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw DataError("site '" + sites[i].id + "': " + errors[i]);
    return out;
}

std::vector<CovariateRow> build_covariate_rows(const Dataset& ds, const BufferSpec& traffic_rings, Exec exec)
{
    const auto src = make_sources(ds, traffic_rings);
    auto statics = site_covariates_batch(ds.sites, src, exec);
    const auto cal = Calendar::parse(ds.manifest.get("epoch", "1994-01-01"));

    std::vector<CovariateRow> rows;
    for (std::size_t i = 0; i < ds.sites.size(); ++i) {
        const auto& site = ds.sites[i];
        if (auto e = ds.elevation_m.find(site.id); e != ds.elevation_m.end())
            statics[i].elevation_m = e->second;
        bool any = false;
        if (site.role == SiteRole::calibration) {
            for (const auto& obs : ds.interval_obs) {
                if (obs.site_id != site.id)
                    continue;
                any = true;
                CovariateRow row;
                row.site = statics[i];
                row.t_start = obs.t_start;
                row.t_end = obs.t_end;
                row.dyr = interval_dyr(cal, obs.t_start, obs.t_end);
                row.season = seasonal_basis(*row.dyr);
                row.cmaq_mean = interval_mean(ds.cmaq.series(statics[i].cmaq_pixel), obs.t_start, obs.t_end).mean;
                rows.push_back(std::move(row));
            }
        }
        if (!any) {
            CovariateRow row;
            row.site = statics[i];
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

namespace {

std::string opt_num(const std::optional<double>& v)
{
    return v ? format_number(*v) : std::string("NA");
}

std::string opt_int(const std::optional<int>& v)
{
    return v ? std::to_string(*v) : std::string("NA");
}

std::vector<std::string> covariate_header(const BufferSpec& tr, const BufferSpec& lr)
{
    std::vector<std::string> h = {"site_id", "t_start", "t_end",  "dyr",         "sin2pi",     "cos2pi",
                                  "sin4pi",  "cos4pi",  "pop_density", "elevation_m", "cmaq_pixel", "cmaq_mean"};
    for (std::size_t k = 0; k < tr.rings(); ++k)
        h.push_back("ttv_" + tr.ring_label(k));
    for (const char* q : kQuadrantNames)
        for (std::size_t k = 0; k < tr.rings(); ++k)
            h.push_back("ttv_" + std::string(q) + "_" + tr.ring_label(k));
    for (const char* c : kLanduseNames)
        for (std::size_t k = 0; k < lr.rings(); ++k)
            h.push_back("lu_" + std::string(c) + "_" + lr.ring_label(k));
    return h;
}

BufferSpec radii_from_labels(const std::vector<std::string>& header, const std::string& prefix)
{
    BufferSpec spec;
    for (const auto& h : header) {
        if (h.rfind(prefix, 0) != 0)
            continue;
        const auto label = h.substr(prefix.size());
        const auto dash = label.find('-');
        if (dash == std::string::npos)
            continue;
        auto outer = parse_double(label.substr(dash + 1));
        auto inner = parse_double(label.substr(0, dash));
        if (!outer || !inner)
            continue;
        spec.radii_km.push_back(*outer);
    }
    return spec;
}

} // namespace

std::string covariates_to_csv(const std::vector<CovariateRow>& rows, const BufferSpec& tr,
                              const BufferSpec& lr, const std::string& comment)
{
    std::string out;
    if (!comment.empty())
        out += comment + "\n";
    const auto header = covariate_header(tr, lr);
    for (std::size_t i = 0; i < header.size(); ++i)
        out += (i ? "," : "") + header[i];
    out += '\n';
    for (const auto& r : rows) {
        const auto& s = r.site;
        out += s.site_id + "," + opt_int(r.t_start) + "," + opt_int(r.t_end) + "," + opt_num(r.dyr);
        for (double b : r.season)
            out += "," + (r.dyr ? format_number(b) : std::string("NA"));
        out += "," + format_number(s.pop_density) + "," + opt_num(s.elevation_m) + "," +
               std::to_string(s.cmaq_pixel) + "," + opt_num(r.cmaq_mean);
        for (double v : s.ttv)
            out += "," + format_number(v);
        for (const auto& q : s.ttv_quadrant)
            for (double v : q)
                out += "," + format_number(v);
        for (const auto& cat : s.landuse.hectares)
            for (double v : cat)
                out += "," + format_number(v);
        out += '\n';
    }
    return out;
}

std::vector<CovariateRow> covariates_from_csv(const std::string& text, BufferSpec& tr, BufferSpec& lr)
{
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    std::vector<CovariateRow> rows;
    int lineno = 0;
    auto fail = [&](const std::string& msg) { throw DataError("covariates.csv:" + std::to_string(lineno) + ": " + msg); };
    auto num = [&](const std::string& f) {
        auto v = parse_double(f);
        if (!v)
            fail("not a number: '" + f + "'");
        return *v;
    };
    auto opt = [&](const std::string& f) -> std::optional<double> {
        if (f == "NA")
            return std::nullopt;
        return num(f);
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        auto fields = split(t, ',');
        if (header.empty()) {
            header = fields;
            BufferSpec all = radii_from_labels(header, "ttv_");
            tr.radii_km.clear();
            // plain "ttv_a-b" columns precede the quadrant ones
            for (std::size_t i = 12; i < header.size() && header[i].find('_', 4) == std::string::npos; ++i)
                tr.radii_km.push_back(all.radii_km[i - 12]);
            BufferSpec lu = radii_from_labels(header, "lu_developed_");
            lr = lu;
            if (header != covariate_header(tr, lr))
                fail("unexpected covariates header");
            continue;
        }
        if (fields.size() != header.size())
            fail("field count mismatch");
        CovariateRow r;
        auto& s = r.site;
        s.site_id = fields[0];
        if (fields[1] != "NA")
            r.t_start = static_cast<int>(num(fields[1]));
        if (fields[2] != "NA")
            r.t_end = static_cast<int>(num(fields[2]));
        r.dyr = opt(fields[3]);
        for (int i = 0; i < 4; ++i)
            r.season[i] = r.dyr ? num(fields[4 + i]) : 0.0;
        s.pop_density = num(fields[8]);
        s.elevation_m = opt(fields[9]);
        s.cmaq_pixel = static_cast<int>(num(fields[10]));
        r.cmaq_mean = opt(fields[11]);
        std::size_t c = 12;
        for (std::size_t k = 0; k < tr.rings(); ++k)
            s.ttv.push_back(num(fields[c++]));
        for (auto& q : s.ttv_quadrant)
            for (std::size_t k = 0; k < tr.rings(); ++k)
                q.push_back(num(fields[c++]));
        for (auto& cat : s.landuse.hectares)
            for (std::size_t k = 0; k < lr.rings(); ++k)
                cat.push_back(num(fields[c++]));
        rows.push_back(std::move(r));
    }
    if (header.empty())
        throw DataError("covariates.csv: empty file");
    return rows;
}

std::vector<double> traffic_density(const std::vector<double>& ttv, const BufferSpec& spec)
{
    std::vector<double> out(ttv.size());
    for (std::size_t k = 0; k < ttv.size(); ++k) {
        const double inner = k == 0 ? 0.0 : spec.radii_km[k - 1];
        const double area = std::numbers::pi * (spec.radii_km[k] * spec.radii_km[k] - inner * inner);
        out[k] = ttv[k] / area;
    }
    return out;
}

} // namespace scarr
