#include "scarr/data_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "scarr/csv.hpp"
#include "scarr/error.hpp"
#include "scarr/text.hpp"

namespace fs = std::filesystem;

namespace scarr {

std::string to_string(SiteRole role)
{
    switch (role) {
    case SiteRole::calibration: return "calibration";
    case SiteRole::dense_time: return "dense_time";
    case SiteRole::prediction: return "prediction";
    }
    return "calibration";
}

SiteRole parse_site_role(const std::string& text)
{
    if (text == "calibration")
        return SiteRole::calibration;
    if (text == "dense_time")
        return SiteRole::dense_time;
    if (text == "prediction")
        return SiteRole::prediction;
    throw DataError("unknown site role '" + text + "'");
}

std::optional<double> DailySeries::at(int day) const
{
    auto it = std::lower_bound(values.begin(), values.end(), day,
                               [](const DailyValue& v, int d) { return v.day < d; });
    if (it == values.end() || it->day != day)
        return std::nullopt;
    return it->value;
}

IntervalMean interval_mean(const DailySeries& series, int t_start, int t_end)
{
    if (t_start > t_end)
        throw DataError("interval_mean: t_start > t_end");
    if (series.values.empty() || t_end < series.first_day() || t_start > series.last_day())
        throw DataError("interval [" + std::to_string(t_start) + "," + std::to_string(t_end) +
                        "] outside the domain of series '" + series.id + "'");
    double sum = 0.0;
    int count = 0;
    for (const auto& v : series.values) {
        if (v.day < t_start || v.day > t_end || !v.value)
            continue;
        sum += *v.value;
        ++count;
    }
    IntervalMean out;
    out.days_used = count;
    if (count > 0)
        out.mean = sum / count;
    return out;
}

const DailySeries& CmaqGrid::series(int pixel_id) const
{
    auto it = daily.find(pixel_id);
    if (it == daily.end())
        throw DataError("no CMAQ daily series for pixel " + std::to_string(pixel_id));
    return it->second;
}

bool CmaqGrid::covers(Point p, int pixel_id) const
{
    for (const auto& px : pixels) {
        if (px.id != pixel_id)
            continue;
        const double half = 0.5 * cell_size;
        return std::abs(p.x - px.x) <= half && std::abs(p.y - px.y) <= half;
    }
    return false;
}

int nearest_cmaq_centroid(Point p, const CmaqGrid& grid)
{
    if (grid.pixels.empty())
        throw DataError("nearest_cmaq_centroid: empty CMAQ grid");
    int best_id = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& px : grid.pixels) {
        const double dx = p.x - px.x;
        const double dy = p.y - px.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best || (d2 == best && px.id < best_id)) {
            best = d2;
            best_id = px.id;
        }
    }
    return best_id;
}

RasterGrid::RasterGrid(int cols, int rows, double xll, double yll, double cell, double nodata)
    : n_cols(cols), n_rows(rows), x_ll(xll), y_ll(yll), cell_size(cell), nodata_value(nodata),
      values(static_cast<std::size_t>(cols) * rows, nodata)
{
}

std::string raster_to_text(const RasterGrid& g, const std::string& comment)
{
    std::string out;
    out.reserve(g.values.size() * 8 + 256);
    if (!comment.empty())
        out += comment + "\n";
    out += "ncols " + std::to_string(g.n_cols) + "\n";
    out += "nrows " + std::to_string(g.n_rows) + "\n";
    out += "xllcorner " + format_number(g.x_ll) + "\n";
    out += "yllcorner " + format_number(g.y_ll) + "\n";
    out += "cellsize " + format_number(g.cell_size) + "\n";
    out += "NODATA_value " + format_g6(g.nodata_value) + "\n";
    for (int r = 0; r < g.n_rows; ++r) {
        for (int c = 0; c < g.n_cols; ++c) {
            if (c)
                out += ' ';
            out += format_g6(g.at(r, c));
        }
        out += '\n';
    }
    return out;
}

RasterGrid raster_from_text(const std::string& text, const std::string& origin)
{
    std::istringstream in(text);
    std::string line;
    std::map<std::string, std::string> header;
    const std::vector<std::string> keys = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                                           "NODATA_value"};
    auto fail = [&](const std::string& msg) -> void { throw DataError(origin + ": " + msg); };
    while (header.size() < keys.size() && std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        std::istringstream ls{std::string(t)};
        std::string key, value;
        ls >> key >> value;
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            fail("unexpected raster header key '" + key + "'");
        header[key] = value;
    }
    for (const auto& k : keys)
        if (!header.count(k))
            fail("missing raster header '" + k + "'");
    auto ncols = parse_int(header["ncols"]);
    auto nrows = parse_int(header["nrows"]);
    auto xll = parse_double(header["xllcorner"]);
    auto yll = parse_double(header["yllcorner"]);
    auto cell = parse_double(header["cellsize"]);
    auto nodata = parse_double(header["NODATA_value"]);
    if (!ncols || !nrows || *ncols <= 0 || *nrows <= 0)
        fail("ncols/nrows must be positive integers");
    if (!xll || !yll || !cell || !nodata || *cell <= 0)
        fail("invalid numeric raster header");
    RasterGrid g(static_cast<int>(*ncols), static_cast<int>(*nrows), *xll, *yll, *cell, *nodata);
    std::size_t k = 0;
    std::string tok;
    while (in >> tok) {
        if (k >= g.values.size())
            fail("more values than ncols*nrows");
        auto v = parse_double(tok);
        if (!v || (!std::isfinite(*v)))
            fail("invalid raster value '" + tok + "'");
        g.values[k++] = *v;
    }
    if (k != g.values.size())
        fail("expected " + std::to_string(g.values.size()) + " values, got " + std::to_string(k));
    return g;
}

RasterGrid read_raster(const fs::path& path)
{
    return raster_from_text(read_text_file(path), path.filename().string());
}

void write_raster(const fs::path& path, const RasterGrid& grid, const std::string& comment)
{
    write_text_file(path, raster_to_text(grid, comment));
}

std::string Manifest::get(const std::string& key, const std::string& fallback) const
{
    auto it = entries.find(key);
    return it == entries.end() ? fallback : it->second;
}

std::optional<std::string> Manifest::find(const std::string& key) const
{
    auto it = entries.find(key);
    if (it == entries.end())
        return std::nullopt;
    return it->second;
}

const SiteRecord* Dataset::find_site(const std::string& id) const
{
    for (const auto& s : sites)
        if (s.id == id)
            return &s;
    return nullptr;
}

const DailySeries* Dataset::find_series(const std::string& site_id) const
{
    for (const auto& s : daily_series)
        if (s.id == site_id)
            return &s;
    return nullptr;
}

int Dataset::day_count() const
{
    if (auto d = manifest.find("days")) {
        if (auto v = parse_int(*d))
            return static_cast<int>(*v);
    }
    int last = 0;
    for (const auto& s : daily_series)
        if (!s.values.empty())
            last = std::max(last, s.last_day());
    for (const auto& [id, s] : cmaq.daily)
        if (!s.values.empty())
            last = std::max(last, s.last_day());
    return last;
}

namespace {

struct FileNames {
    static std::string def(const std::string& key)
    {
        static const std::map<std::string, std::string> names = {
            {"sites", "sites.csv"},
            {"interval_obs", "interval_obs.csv"},
            {"daily_series", "daily_series.csv"},
            {"cmaq_centroids", "cmaq_centroids.csv"},
            {"cmaq_daily", "cmaq_daily.csv"},
            {"traffic_polylines", "traffic_polylines.csv"},
            {"tracts", "tracts.csv"},
            {"tract_attrs", "tract_attrs.csv"},
            {"site_attrs", "site_attrs.csv"},
            {"landuse", "landuse.asc"},
            {"landuse_reclass", "landuse_reclass.csv"},
            {"prediction_mask", "prediction_mask.asc"},
        };
        return names.at(key);
    }
};

fs::path file_for(const fs::path& dir, const Manifest& m, const std::string& key)
{
    return dir / m.get(key, FileNames::def(key));
}

Manifest read_manifest(const fs::path& path, std::string& provenance)
{
    Manifest m;
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty())
            continue;
        if (t.front() == '#') {
            if (provenance.empty())
                provenance = std::string(trim(t.substr(1)));
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw DataError("manifest.txt:" + std::to_string(lineno) + ": expected key=value");
        m.entries[std::string(trim(t.substr(0, eq)))] = std::string(trim(t.substr(eq + 1)));
    }
    return m;
}

void check_increasing(const DailySeries& s, const CsvTable& t, const CsvRow& row, int day)
{
    if (!s.values.empty() && day <= s.values.back().day)
        t.fail(row, "non-monotone day index " + std::to_string(day) + " for '" + s.id + "'");
}

std::optional<double> parse_value_or_na(const CsvTable& t, const CsvRow& row, std::size_t col)
{
    if (row.fields[col] == "NA")
        return std::nullopt;
    double v = t.number(row, col);
    if (!std::isfinite(v))
        t.fail(row, "non-finite value");
    return v;
}

std::string value_or_na(const std::optional<double>& v)
{
    return v ? format_number(*v) : std::string("NA");
}

} // namespace

Dataset load_dataset(const fs::path& dir)
{
    Dataset ds;
    const auto manifest_path = dir / "manifest.txt";
    if (fs::exists(manifest_path))
        ds.manifest = read_manifest(manifest_path, ds.provenance);

    const auto sites_path = file_for(dir, ds.manifest, "sites");
    if (!fs::exists(sites_path))
        throw DataError("missing sites file (" + sites_path.string() + ")");

    {
        auto t = read_csv(sites_path, {"id", "x", "y", "role"});
        std::set<std::string> seen;
        for (const auto& row : t.rows) {
            SiteRecord s;
            s.id = row.fields[0];
            s.x = t.number(row, 1);
            s.y = t.number(row, 2);
            if (!std::isfinite(s.x) || !std::isfinite(s.y))
                t.fail(row, "non-finite coordinates");
            try {
                s.role = parse_site_role(row.fields[3]);
            } catch (const DataError& e) {
                t.fail(row, e.what());
            }
            if (!seen.insert(s.id).second)
                t.fail(row, "duplicate site id '" + s.id + "'");
            ds.sites.push_back(s);
        }
    }
    auto require_site = [&](const CsvTable& t, const CsvRow& row, const std::string& id) {
        if (!ds.find_site(id))
            t.fail(row, "unknown site_id '" + id + "'");
    };

    for (const std::string key : {"interval_obs", "daily_series", "cmaq_centroids", "cmaq_daily"})
        if (!fs::exists(file_for(dir, ds.manifest, key)))
            throw DataError("missing " + key + " file (" + file_for(dir, ds.manifest, key).string() + ")");

    {
        auto t = read_csv(file_for(dir, ds.manifest, "interval_obs"),
                          {"site_id", "t_start", "t_end", "value_ppb"});
        for (const auto& row : t.rows) {
            IntervalObservation o;
            o.site_id = row.fields[0];
            require_site(t, row, o.site_id);
            o.t_start = t.integer(row, 1);
            o.t_end = t.integer(row, 2);
            o.value = t.number(row, 3);
            if (o.t_start < 1 || o.t_start > o.t_end)
                t.fail(row, "invalid interval [t_start, t_end]");
            if (!(o.value > 0.0) || !std::isfinite(o.value))
                t.fail(row, "interval value must be positive and finite");
            ds.interval_obs.push_back(o);
        }
    }

    {
        auto t = read_csv(file_for(dir, ds.manifest, "daily_series"), {"site_id", "day", "value_ppb"});
        for (const auto& row : t.rows) {
            const auto& id = row.fields[0];
            require_site(t, row, id);
            auto it = std::find_if(ds.daily_series.begin(), ds.daily_series.end(),
                                   [&](const DailySeries& s) { return s.id == id; });
            if (it == ds.daily_series.end()) {
                ds.daily_series.push_back({id, {}});
                it = std::prev(ds.daily_series.end());
            }
            const int day = t.integer(row, 1);
            check_increasing(*it, t, row, day);
            it->values.push_back({day, parse_value_or_na(t, row, 2)});
        }
    }

    {
        auto t = read_csv(file_for(dir, ds.manifest, "cmaq_centroids"), {"pixel_id", "x", "y"});
        std::set<int> seen;
        for (const auto& row : t.rows) {
            CmaqPixel p{t.integer(row, 0), t.number(row, 1), t.number(row, 2)};
            if (!seen.insert(p.id).second)
                t.fail(row, "duplicate pixel_id " + std::to_string(p.id));
            ds.cmaq.pixels.push_back(p);
        }
        auto cs = ds.manifest.find("cmaq_cell_size");
        auto cell = cs ? parse_double(*cs) : std::nullopt;
        if (!cell || *cell <= 0)
            throw DataError("manifest.txt: cmaq_cell_size missing or invalid");
        ds.cmaq.cell_size = *cell;
        if (!ds.cmaq.pixels.empty()) {
            const auto& o = ds.cmaq.pixels.front();
            for (const auto& p : ds.cmaq.pixels) {
                const double fx = (p.x - o.x) / *cell;
                const double fy = (p.y - o.y) / *cell;
                if (std::abs(fx - std::round(fx)) > 1e-6 || std::abs(fy - std::round(fy)) > 1e-6)
                    throw DataError("cmaq_centroids: pixel " + std::to_string(p.id) +
                                    " is off the regular lattice");
            }
        }

        auto d = read_csv(file_for(dir, ds.manifest, "cmaq_daily"), {"pixel_id", "day", "value_ppb"});
        for (const auto& row : d.rows) {
            const int id = d.integer(row, 0);
            if (!seen.count(id))
                d.fail(row, "unknown pixel_id " + std::to_string(id));
            auto& s = ds.cmaq.daily[id];
            s.id = std::to_string(id);
            const int day = d.integer(row, 1);
            check_increasing(s, d, row, day);
            s.values.push_back({day, parse_value_or_na(d, row, 2)});
        }
    }

    if (auto p = file_for(dir, ds.manifest, "traffic_polylines"); fs::exists(p)) {
        auto t = read_csv(p, {"line_id", "vertex_index", "x", "y", "adt"});
        for (const auto& row : t.rows) {
            const auto& id = row.fields[0];
            if (ds.traffic.empty() || ds.traffic.back().id != id) {
                for (const auto& l : ds.traffic)
                    if (l.id == id)
                        t.fail(row, "vertices of line '" + id + "' are not contiguous");
                ds.traffic.push_back({id, {}, t.number(row, 4)});
            }
            auto& line = ds.traffic.back();
            if (t.integer(row, 1) != static_cast<int>(line.vertices.size()))
                t.fail(row, "vertex_index out of sequence for line '" + id + "'");
            if (t.number(row, 4) != line.adt)
                t.fail(row, "adt differs between vertices of line '" + id + "'");
            if (line.adt < 0)
                t.fail(row, "negative adt");
            line.vertices.push_back({t.number(row, 2), t.number(row, 3)});
        }
    }

    if (auto p = file_for(dir, ds.manifest, "tracts"); fs::exists(p)) {
        auto t = read_csv(p, {"tract_id", "vertex_index", "x", "y"});
        for (const auto& row : t.rows) {
            const auto& id = row.fields[0];
            if (ds.tracts.empty() || ds.tracts.back().id != id) {
                for (const auto& tr : ds.tracts)
                    if (tr.id == id)
                        t.fail(row, "vertices of tract '" + id + "' are not contiguous");
                ds.tracts.push_back({id, {}, 0.0, 0.0});
            }
            auto& tract = ds.tracts.back();
            if (t.integer(row, 1) != static_cast<int>(tract.ring.size()))
                t.fail(row, "vertex_index out of sequence for tract '" + id + "'");
            tract.ring.push_back({t.number(row, 2), t.number(row, 3)});
        }
        auto a = read_csv(file_for(dir, ds.manifest, "tract_attrs"), {"tract_id", "population", "area_mi2"});
        std::set<std::string> with_attrs;
        for (const auto& row : a.rows) {
            auto it = std::find_if(ds.tracts.begin(), ds.tracts.end(),
                                   [&](const TractPolygon& tp) { return tp.id == row.fields[0]; });
            if (it == ds.tracts.end())
                a.fail(row, "unknown tract_id '" + row.fields[0] + "'");
            it->population = a.number(row, 1);
            it->area_mi2 = a.number(row, 2);
            if (!(it->area_mi2 > 0))
                a.fail(row, "tract area must be positive");
            with_attrs.insert(it->id);
        }
        for (const auto& tr : ds.tracts) {
            if (!with_attrs.count(tr.id))
                throw DataError("tract_attrs.csv: no attributes for tract '" + tr.id + "'");
            if (tr.ring.size() < 3)
                throw DataError("tracts.csv: tract '" + tr.id + "' has fewer than 3 vertices");
        }
    }

    if (auto p = file_for(dir, ds.manifest, "site_attrs"); fs::exists(p)) {
        auto t = read_csv(p, {"site_id", "elevation_m"});
        for (const auto& row : t.rows) {
            require_site(t, row, row.fields[0]);
            ds.elevation_m[row.fields[0]] = t.number(row, 1);
        }
    }

    if (auto p = file_for(dir, ds.manifest, "landuse"); fs::exists(p))
        ds.landuse = read_raster(p);

    if (auto p = file_for(dir, ds.manifest, "landuse_reclass"); fs::exists(p)) {
        auto t = read_csv(p, {"code", "category"});
        for (const auto& row : t.rows)
            ds.landuse_reclass[t.integer(row, 0)] = row.fields[1];
    }

    if (auto p = file_for(dir, ds.manifest, "prediction_mask"); fs::exists(p))
        ds.prediction_mask = read_raster(p);

    return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir)
{
    fs::create_directories(dir);
    const std::string head = ds.provenance.empty() ? std::string() : "# " + ds.provenance + "\n";
    auto path = [&](const std::string& key) { return file_for(dir, ds.manifest, key); };

    {
        std::string out = head;
        for (const auto& [k, v] : ds.manifest.entries)
            out += k + "=" + v + "\n";
        write_text_file(dir / "manifest.txt", out);
    }
    {
        std::string out = head + "id,x,y,role\n";
        for (const auto& s : ds.sites)
            out += s.id + "," + format_number(s.x) + "," + format_number(s.y) + "," + to_string(s.role) + "\n";
        write_text_file(path("sites"), out);
    }
    {
        std::string out = head + "site_id,t_start,t_end,value_ppb\n";
        for (const auto& o : ds.interval_obs)
            out += o.site_id + "," + std::to_string(o.t_start) + "," + std::to_string(o.t_end) + "," +
                   format_number(o.value) + "\n";
        write_text_file(path("interval_obs"), out);
    }
    {
        std::string out = head + "site_id,day,value_ppb\n";
        for (const auto& s : ds.daily_series)
            for (const auto& v : s.values)
                out += s.id + "," + std::to_string(v.day) + "," + value_or_na(v.value) + "\n";
        write_text_file(path("daily_series"), out);
    }
    {
        std::string out = head + "pixel_id,x,y\n";
        for (const auto& p : ds.cmaq.pixels)
            out += std::to_string(p.id) + "," + format_number(p.x) + "," + format_number(p.y) + "\n";
        write_text_file(path("cmaq_centroids"), out);
        std::string daily = head + "pixel_id,day,value_ppb\n";
        for (const auto& p : ds.cmaq.pixels) {
            auto it = ds.cmaq.daily.find(p.id);
            if (it == ds.cmaq.daily.end())
                continue;
            for (const auto& v : it->second.values)
                daily += std::to_string(p.id) + "," + std::to_string(v.day) + "," + value_or_na(v.value) + "\n";
        }
        write_text_file(path("cmaq_daily"), daily);
    }
    if (!ds.traffic.empty()) {
        std::string out = head + "line_id,vertex_index,x,y,adt\n";
        for (const auto& l : ds.traffic)
            for (std::size_t i = 0; i < l.vertices.size(); ++i)
                out += l.id + "," + std::to_string(i) + "," + format_number(l.vertices[i].x) + "," +
                       format_number(l.vertices[i].y) + "," + format_number(l.adt) + "\n";
        write_text_file(path("traffic_polylines"), out);
    }
    if (!ds.tracts.empty()) {
        std::string out = head + "tract_id,vertex_index,x,y\n";
        std::string attrs = head + "tract_id,population,area_mi2\n";
        for (const auto& t : ds.tracts) {
            for (std::size_t i = 0; i < t.ring.size(); ++i)
                out += t.id + "," + std::to_string(i) + "," + format_number(t.ring[i].x) + "," +
                       format_number(t.ring[i].y) + "\n";
            attrs += t.id + "," + format_number(t.population) + "," + format_number(t.area_mi2) + "\n";
        }
        write_text_file(path("tracts"), out);
        write_text_file(path("tract_attrs"), attrs);
    }
    if (!ds.elevation_m.empty()) {
        std::string out = head + "site_id,elevation_m\n";
        for (const auto& s : ds.sites) {
            auto it = ds.elevation_m.find(s.id);
            if (it != ds.elevation_m.end())
                out += s.id + "," + format_number(it->second) + "\n";
        }
        write_text_file(path("site_attrs"), out);
    }
    const std::string comment = ds.provenance.empty() ? std::string() : "# " + ds.provenance;
    if (ds.landuse)
        write_raster(path("landuse"), *ds.landuse, comment);
    if (!ds.landuse_reclass.empty()) {
        std::string out = head + "code,category\n";
        for (const auto& [code, cat] : ds.landuse_reclass)
            out += std::to_string(code) + "," + cat + "\n";
        write_text_file(path("landuse_reclass"), out);
    }
    if (ds.prediction_mask)
        write_raster(path("prediction_mask"), *ds.prediction_mask, comment);
}

Calendar Calendar::parse(const std::string& iso)
{
    auto parts = split(iso, '-');
    if (parts.size() != 3)
        throw DataError("epoch must be YYYY-MM-DD, got '" + iso + "'");
    auto y = parse_int(parts[0]);
    auto m = parse_int(parts[1]);
    auto d = parse_int(parts[2]);
    if (!y || !m || !d)
        throw DataError("epoch must be YYYY-MM-DD, got '" + iso + "'");
    Calendar c{static_cast<int>(*y), static_cast<int>(*m), static_cast<int>(*d)};
    using namespace std::chrono;
    if (!year_month_day{year{c.epoch_year}, month{static_cast<unsigned>(c.epoch_month)},
                        day{static_cast<unsigned>(c.epoch_day)}}
             .ok())
        throw DataError("invalid epoch date '" + iso + "'");
    return c;
}

int Calendar::day_of_year(int dataset_day) const
{
    using namespace std::chrono;
    const sys_days epoch{year{epoch_year} / month{static_cast<unsigned>(epoch_month)} /
                         day{static_cast<unsigned>(epoch_day)}};
    const sys_days current = epoch + days{dataset_day - 1};
    const year_month_day ymd{current};
    const sys_days jan1{ymd.year() / January / 1};
    return static_cast<int>((current - jan1).count()) + 1;
}

double dyr_from_day_of_year(double doy)
{
    double x = doy / 365.0;
    while (x > 1.0)
        x -= 1.0;
    while (x <= 0.0)
        x += 1.0;
    return x;
}

double interval_dyr(const Calendar& cal, int t_start, int t_end)
{
    const double mid = cal.day_of_year(t_start) + 0.5 * (t_end - t_start);
    return dyr_from_day_of_year(mid);
}

double day_dyr(const Calendar& cal, int day)
{
    return dyr_from_day_of_year(cal.day_of_year(day));
}

} // namespace scarr
