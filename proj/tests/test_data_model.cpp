#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "scarr/csv.hpp"
#include "scarr/data_model.hpp"
#include "scarr/error.hpp"
#include "scarr/oracle.hpp"
#include "scarr/rng.hpp"
#include "scarr/text.hpp"

namespace fs = std::filesystem;
using namespace scarr;

namespace {

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("scarr_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

CmaqGrid three_by_three(double cell = 12000.0)
{
    CmaqGrid g;
    g.cell_size = cell;
    int id = 1;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c, ++id)
            g.pixels.push_back({id, (c + 0.5) * cell, (2.5 - r) * cell});
    return g;
}

std::map<std::string, std::string> read_all(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        out[e.path().filename().string()] = read_text_file(e.path());
    return out;
}

} // namespace

TEST_CASE("format_number round-trips and is shortest")
{
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(-2.5e-7) == "-2.5e-07");
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform_int(-12, 12));
        CHECK(*parse_double(format_number(v)) == v);
    }
}

TEST_CASE("strict number parsing")
{
    CHECK(parse_double("1.5") == 1.5);
    CHECK_FALSE(parse_double("1.5x"));
    CHECK_FALSE(parse_double(""));
    CHECK(parse_int("-12") == -12);
    CHECK_FALSE(parse_int("1.0"));
}

TEST_CASE("fnv1a64 reference values")
{
    CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
    CHECK(header_comment("00ff") == "# scarr 0.1.0 config_hash=00ff");
}

TEST_CASE("nearest_cmaq_centroid")
{
    const auto g = three_by_three();
    SUBCASE("site at the centroid of pixel 7")
    {
        const auto& p7 = g.pixels[6];
        CHECK(nearest_cmaq_centroid(SiteRecord{"s", p7.x, p7.y}, g) == 7);
    }
    SUBCASE("equidistant from 3 and 9 goes to 3")
    {
        CmaqGrid pair;
        pair.cell_size = 12000.0;
        pair.pixels = {{9, 18000.0, 6000.0}, {3, 6000.0, 6000.0}};
        CHECK(nearest_cmaq_centroid(Point{12000.0, 500.0}, pair) == 3);
    }
    SUBCASE("matches an exhaustive scan")
    {
        Rng rng(11);
        for (int i = 0; i < 500; ++i) {
            const Point p{rng.uniform(-5000, 41000), rng.uniform(-5000, 41000)};
            int best = -1;
            double bd = std::numeric_limits<double>::infinity();
            for (const auto& px : g.pixels) {
                const double d = std::hypot(px.x - p.x, px.y - p.y);
                if (d < bd) {
                    bd = d;
                    best = px.id;
                }
            }
            CHECK(nearest_cmaq_centroid(p, g) == best);
        }
    }
}

TEST_CASE("interval_mean")
{
    DailySeries s{"x", {{1, 2.0}, {2, 4.0}, {3, 6.0}}};
    auto m = interval_mean(s, 1, 3);
    CHECK(*m.mean == 4.0);
    CHECK(m.days_used == 3);

    s.values[1].value.reset();
    m = interval_mean(s, 1, 3);
    CHECK(*m.mean == 4.0);
    CHECK(m.days_used == 2);

    CHECK_THROWS_AS(interval_mean(s, 10, 12), DataError);

    Rng rng(5);
    DailySeries long_series{"y", {}};
    for (int d = 1; d <= 40; ++d)
        long_series.values.push_back({d, rng.uniform(0, 50)});
    double sum = 0;
    for (int d = 11; d <= 23; ++d)
        sum += *long_series.values[d - 1].value;
    CHECK(*interval_mean(long_series, 11, 23).mean == doctest::Approx(sum / 13).epsilon(1e-14));
}

TEST_CASE("calendar and day-of-year ratio")
{
    const auto cal = Calendar::parse("1994-01-01");
    CHECK(cal.day_of_year(1) == 1);
    CHECK(cal.day_of_year(365) == 365);
    CHECK(cal.day_of_year(366) == 1);
    CHECK(day_dyr(cal, 365) == doctest::Approx(1.0));
    CHECK(dyr_from_day_of_year(365.0) == doctest::Approx(1.0));
    const double mid = interval_dyr(cal, 360, 374);
    CHECK(mid > 0.0);
    CHECK(mid <= 1.0);
    CHECK_THROWS_AS(Calendar::parse("1994/01/01"), DataError);
}

TEST_CASE("raster text round trip")
{
    RasterGrid g(3, 2, 100.0, 200.0, 30.0, -9999.0);
    g.values = {1, 2, 3, -9999, 5.5, 6};
    const auto text = raster_to_text(g, "# hello");
    const auto back = raster_from_text(text);
    CHECK(back.n_cols == 3);
    CHECK(back.n_rows == 2);
    CHECK(back.values == g.values);
    CHECK(raster_to_text(back, "# hello") == text);
    CHECK(g.cell_center(0, 0).y == doctest::Approx(245.0));
    CHECK_THROWS_AS(raster_from_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1\n"),
                    DataError);
}

TEST_CASE("load_dataset errors")
{
    const auto empty = scratch("empty");
    CHECK_THROWS_WITH_AS(load_dataset(empty), doctest::Contains("missing sites file"), DataError);

    oracle::SimulationConfig cfg;
    cfg.T = 30;
    const auto sim = oracle::simulate_step1_dataset(cfg);
    const auto dir = scratch("unknown_site");
    write_dataset(sim.dataset, dir);
    {
        std::ofstream f(dir / "interval_obs.csv", std::ios::app);
        f << "ZZZ9,1,3,10\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("ZZZ9"), DataError);
}

TEST_CASE("write(load(d)) reproduces the files byte for byte")
{
    oracle::SimulationConfig cfg;
    cfg.T = 40;
    const auto sim = oracle::simulate_step1_dataset(cfg);
    const auto a = scratch("rt_a");
    const auto b = scratch("rt_b");
    write_dataset(sim.dataset, a);
    write_dataset(load_dataset(a), b);
    const auto fa = read_all(a);
    const auto fb = read_all(b);
    CHECK(fa.size() == fb.size());
    for (const auto& [name, text] : fa) {
        INFO(name);
        CHECK(fb.at(name) == text);
    }
    const auto ds = load_dataset(a);
    CHECK(ds.sites.size() == sim.dataset.sites.size());
    CHECK(ds.day_count() == 40);
}

TEST_CASE("bundled mini dataset shape")
{
    const auto ds = load_dataset(fs::path(SCARR_SOURCE_DIR) / "data" / "mini");
    int cal = 0, dense = 0;
    for (const auto& s : ds.sites) {
        cal += s.role == SiteRole::calibration;
        dense += s.role == SiteRole::dense_time;
    }
    CHECK(cal == 20);
    CHECK(dense == 4);
    CHECK(ds.prediction_mask.has_value());
}
