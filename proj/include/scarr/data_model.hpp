#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scarr {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class SiteRole { calibration, dense_time, prediction };

std::string to_string(SiteRole role);
SiteRole parse_site_role(const std::string& text);

/// Monitored location in a projected planar metric CRS.
struct SiteRecord {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    SiteRole role = SiteRole::calibration;

    Point location() const { return {x, y}; }
};

/// Concentration averaged over the inclusive day range [t_start, t_end].
struct IntervalObservation {
    std::string site_id;
    int t_start = 1;
    int t_end = 1;
    double value = 0.0;

    int length() const { return t_end - t_start + 1; }
};

struct DailyValue {
    int day = 1;
    std::optional<double> value; // nullopt == "NA"
};

struct DailySeries {
    std::string id; // site id or pixel id
    std::vector<DailyValue> values;

    int first_day() const { return values.front().day; }
    int last_day() const { return values.back().day; }
    /// Value on `day`; nullopt when missing or outside the series.
    std::optional<double> at(int day) const;
};

struct IntervalMean {
    std::optional<double> mean;
    int days_used = 0;
};

/// Arithmetic mean of the present values in [t_start, t_end].
/// Throws DataError when the interval does not overlap the series.
IntervalMean interval_mean(const DailySeries& series, int t_start, int t_end);

struct CmaqPixel {
    int id = 0;
    double x = 0.0;
    double y = 0.0;
};

struct CmaqGrid {
    std::vector<CmaqPixel> pixels;
    double cell_size = 0.0;
    std::map<int, DailySeries> daily; // keyed by pixel id

    const DailySeries& series(int pixel_id) const;
    bool covers(Point p, int pixel_id) const;
};

/// Pixel whose centroid is closest to `p`; ties go to the smallest id.
int nearest_cmaq_centroid(Point p, const CmaqGrid& grid);
inline int nearest_cmaq_centroid(const SiteRecord& site, const CmaqGrid& grid)
{
    return nearest_cmaq_centroid(site.location(), grid);
}

/// ESRI ASCII style raster. Row 0 is the northern-most row.
struct RasterGrid {
    int n_cols = 0;
    int n_rows = 0;
    double x_ll = 0.0;
    double y_ll = 0.0;
    double cell_size = 1.0;
    double nodata_value = -9999.0;
    std::vector<double> values;

    RasterGrid() = default;
    RasterGrid(int cols, int rows, double xll, double yll, double cell, double nodata);

    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * n_cols + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * n_cols + col]; }
    bool is_nodata(double v) const { return v == nodata_value; }
    Point cell_center(int row, int col) const
    {
        return {x_ll + (col + 0.5) * cell_size, y_ll + (n_rows - row - 0.5) * cell_size};
    }
    std::size_t size() const { return values.size(); }
};

/// Throws DataError on malformed input. Leading '#' lines are skipped.
RasterGrid read_raster(const std::filesystem::path& path);
/// `comment` (if non-empty) is written as the first line.
void write_raster(const std::filesystem::path& path, const RasterGrid& grid,
                  const std::string& comment = {});
std::string raster_to_text(const RasterGrid& grid, const std::string& comment = {});
RasterGrid raster_from_text(const std::string& text, const std::string& origin = "<memory>");

struct TrafficPolyline {
    std::string id;
    std::vector<Point> vertices;
    double adt = 0.0;
};

struct TractPolygon {
    std::string id;
    std::vector<Point> ring;
    double population = 0.0;
    double area_mi2 = 0.0;
};

struct Manifest {
    std::map<std::string, std::string> entries;

    std::string get(const std::string& key, const std::string& fallback) const;
    std::optional<std::string> find(const std::string& key) const;
};

/// Everything load_dataset reads from a dataset directory. Immutable after load.
struct Dataset {
    std::string provenance; // header comment, without the leading "# "
    Manifest manifest;
    std::vector<SiteRecord> sites;
    std::vector<IntervalObservation> interval_obs;
    std::vector<DailySeries> daily_series;
    CmaqGrid cmaq;
    std::vector<TrafficPolyline> traffic;
    std::vector<TractPolygon> tracts;
    std::map<std::string, double> elevation_m; // site_id -> elevation
    std::optional<RasterGrid> landuse;
    std::map<int, std::string> landuse_reclass; // raster code -> category
    std::optional<RasterGrid> prediction_mask;

    const SiteRecord* find_site(const std::string& id) const;
    const DailySeries* find_series(const std::string& site_id) const;
    int day_count() const;
};

Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Day count and calendar helpers. Day 1 is the manifest epoch.
struct Calendar {
    int epoch_year = 1994;
    int epoch_month = 1;
    int epoch_day = 1;

    static Calendar parse(const std::string& iso_date);
    /// Day of year (1-based) of dataset day `day`.
    int day_of_year(int day) const;
};

/// Day-of-year ratio of a fractional day-of-year, folded into (0, 1].
double dyr_from_day_of_year(double day_of_year);
/// DYR at the midpoint of [t_start, t_end].
double interval_dyr(const Calendar& cal, int t_start, int t_end);
double day_dyr(const Calendar& cal, int day);

} // namespace scarr
