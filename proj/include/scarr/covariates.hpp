#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scarr/data_model.hpp"
#include "scarr/parallel.hpp"

namespace scarr {

struct TrafficSegment {
    Point midpoint;
    double length_km = 0.0;
    double adt = 0.0;

    /// Traffic volume, vehicle-km per day.
    double volume() const { return length_km * adt; }
};

/// Concentric ring radii in kilometres, strictly increasing.
struct BufferSpec {
    std::vector<double> radii_km;

    static BufferSpec standard(); // 0.5, 1, 2, 3, 4, 5, 6
    void validate() const;
    std::size_t rings() const { return radii_km.size(); }
    BufferSpec first(std::size_t n) const;
    /// "0-0.5", "0.5-1", ...
    std::string ring_label(std::size_t k) const;
};

/// Ring containing distance `d_m` (metres): r[k-1] < d <= r[k]; d == 0 maps
/// to the innermost ring. Returns -1 beyond the outer radius.
int ring_index(double d_m, const BufferSpec& spec);

/// Splits each polyline into consecutive pieces of `target_len_m` along its
/// arc length, with one shorter residual piece at the end.
std::vector<TrafficSegment> segmentize(const std::vector<TrafficPolyline>& lines,
                                       double target_len_m = 50.0);
double polyline_length_m(const std::vector<Point>& vertices);

/// Total traffic volume per ring, in units of 10,000 vehicle-km/day.
std::vector<double> ring_ttv(Point site, std::span<const TrafficSegment> sources,
                             const BufferSpec& spec);

enum class Quadrant { NE = 0, NW = 1, SW = 2, SE = 3 };
inline constexpr std::array<const char*, 4> kQuadrantNames = {"NE", "NW", "SW", "SE"};

/// Bearing measured counter-clockwise from east: [0,90) NE, [90,180) NW,
/// [180,270) SW, [270,360) SE. A zero offset is NE.
Quadrant quadrant_of(double dx, double dy);

using QuadrantTable = std::array<std::vector<double>, 4>;
QuadrantTable quadrant_ttv(Point site, std::span<const TrafficSegment> sources,
                           const BufferSpec& spec);

enum class LanduseCategory { developed = 0, forest = 1, other = 2 };
inline constexpr std::array<const char*, 3> kLanduseNames = {"developed", "forest", "other"};
LanduseCategory parse_landuse_category(const std::string& name);

/// NLCD 1992 codes grouped into developed / forest / other.
std::map<int, std::string> default_nlcd92_reclass();

struct LanduseAreas {
    std::array<std::vector<double>, 3> hectares; // [category][ring]

    double combined(LanduseCategory c) const;
};

/// Hectares of each category inside each ring. A cell straddling a ring
/// boundary contributes the exact area of its overlap with the ring.
/// Nodata cells are skipped.
LanduseAreas ring_landuse_area(Point site, const RasterGrid& raster,
                               const std::map<int, std::string>& reclass, const BufferSpec& rings);

/// Index of the first tract containing `p` (boundary counts as inside).
std::optional<std::size_t> containing_tract(Point p, std::span<const TractPolygon> tracts);
bool point_in_polygon(Point p, const std::vector<Point>& ring);

/// Persons per square mile of the containing tract.
double population_density(Point site, std::span<const TractPolygon> tracts);

/// (sin 2πd, cos 2πd, sin 4πd, cos 4πd) for d in (0, 1].
std::array<double, 4> seasonal_basis(double dyr);

/// Time-constant covariates of one location.
struct SiteCovariates {
    std::string site_id;
    std::vector<double> ttv;
    QuadrantTable ttv_quadrant;
    LanduseAreas landuse;
    double pop_density = 0.0;
    std::optional<double> elevation_m;
    int cmaq_pixel = 0;
};

/// One row of covariates.csv: a site, and for calibration sites one of its
/// observation intervals.
struct CovariateRow {
    SiteCovariates site;
    std::optional<int> t_start;
    std::optional<int> t_end;
    std::optional<double> dyr;
    std::array<double, 4> season{};
    std::optional<double> cmaq_mean;
};

struct CovariateSources {
    std::vector<TrafficSegment> segments;
    const RasterGrid* landuse = nullptr;
    std::map<int, std::string> reclass;
    std::span<const TractPolygon> tracts;
    const CmaqGrid* cmaq = nullptr;
    BufferSpec traffic_rings = BufferSpec::standard();
    BufferSpec landuse_rings = BufferSpec::standard().first(3);
};

CovariateSources make_sources(const Dataset& ds, const BufferSpec& traffic_rings);

SiteCovariates site_covariates(const std::string& id, Point p, const CovariateSources& src);

/// Batch kernel over many locations. Parallel and serial paths produce
/// identical rows.
std::vector<SiteCovariates> site_covariates_batch(std::span<const SiteRecord> sites,
                                                  const CovariateSources& src, Exec exec);

/// All rows for a dataset: one per interval observation at calibration sites
/// and one time-less row per other site.
std::vector<CovariateRow> build_covariate_rows(const Dataset& ds, const BufferSpec& traffic_rings,
                                               Exec exec = Exec::parallel);

std::string covariates_to_csv(const std::vector<CovariateRow>& rows, const BufferSpec& traffic_rings,
                              const BufferSpec& landuse_rings, const std::string& comment);
std::vector<CovariateRow> covariates_from_csv(const std::string& text, BufferSpec& traffic_rings,
                                              BufferSpec& landuse_rings);

/// Traffic density summary: TTV / ring area (km²).
std::vector<double> traffic_density(const std::vector<double>& ttv, const BufferSpec& spec);

} // namespace scarr
