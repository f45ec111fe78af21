#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scarr/cli.hpp"
#include "scarr/config.hpp"
#include "scarr/csv.hpp"
#include "scarr/error.hpp"

namespace fs = std::filesystem;
using namespace scarr;

namespace {

int run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "scarr");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("scarr_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const std::string kMiniConf = (fs::path(SCARR_SOURCE_DIR) / "data" / "mini.conf").string();

// Runs every stage on a fresh simulation; returns the combined exit codes.
std::string pipeline(const fs::path& root)
{
    const auto data = (root / "data").string();
    const auto out = (root / "out").string();
    std::string codes;
    codes += std::to_string(run_cli({"simulate", "--config", kMiniConf, "--out", data}));
    for (const char* step : {"features", "fit-step1", "fit-step2", "predict"})
        codes += std::to_string(run_cli({step, data, "--config", kMiniConf, "--out", out}));
    return codes;
}

std::map<std::string, std::string> tree(const fs::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
    return out;
}

} // namespace

TEST_CASE("config parsing")
{
    const auto cfg = parse_config("# comment\n[simulate]\nseed = 11\ndays=200\n\n[step1]\n; note\nalpha = 0.1\n"
                                  "error_model = exponential\n[step2]\nmultistarts = 2\n[predict]\nlast_day = 4\n");
    CHECK(cfg.simulate.seed == 11);
    CHECK(cfg.simulate.T == 200);
    CHECK(cfg.step1.alpha == 0.1);
    CHECK(cfg.step2.multistarts == 2);
    CHECK(cfg.predict.last_day == 4);

    CHECK_THROWS_WITH_AS(parse_config("[step1]\nalpha = 0.1\nbogus = 1\n", "x.conf"),
                         doctest::Contains("x.conf:3"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("[nope]\n", "x.conf"), doctest::Contains("x.conf:1"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[predict]\nfirst_day = 5\nlast_day = 2\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/scarr.conf"), Error);
}

TEST_CASE("canonical text is a fixed point and drives the hash")
{
    const auto cfg = load_config(kMiniConf);
    const auto text = canonical_text(cfg);
    const auto again = parse_config(text);
    CHECK(canonical_text(again) == text);
    CHECK(config_hash(again) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);

    auto other = cfg;
    other.step1.alpha = 0.01;
    CHECK(config_hash(other) != config_hash(cfg));
    CHECK(config_hash(parse_config("")) == config_hash(RunConfig{}));
}

TEST_CASE("usage errors exit with 2")
{
    CHECK(run_cli({"--version"}) == 0);
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"simulate", "--bogus"}) == 2);
    CHECK(run_cli({"features"}) == 2);
    CHECK(run_cli({"unknown-command"}) == 2);
    CHECK(run_cli({"fit-step1", (scratch("nodir") / "missing").string()}) != 0);
    CHECK(run_cli({"simulate", "--config", "/nonexistent.conf", "--out", scratch("badconf").string()}) == 2);
}

TEST_CASE("bad SCARR_JOBS is a configuration error")
{
    const auto dir = scratch("jobs");
    ::setenv("SCARR_JOBS", "zero", 1);
    CHECK(run_cli({"simulate", "--config", kMiniConf, "--out", (dir / "d").string()}) == 2);
    ::setenv("SCARR_JOBS", "1", 1);
    CHECK(run_cli({"simulate", "--config", kMiniConf, "--out", (dir / "d").string()}) == 0);
    ::unsetenv("SCARR_JOBS");
}

TEST_CASE("pipeline is deterministic and every output carries the header")
{
    const auto a = scratch("run_a");
    const auto b = scratch("run_b");
    REQUIRE(pipeline(a) == "00000");
    REQUIRE(pipeline(b) == "00000");
    const auto ta = tree(a);
    const auto tb = tree(b);
    CHECK(ta.size() == tb.size());
    for (const auto& [name, text] : ta) {
        INFO(name);
        CHECK(tb.at(name) == text);
    }

    const auto header = "# scarr 0.1.0 config_hash=" + config_hash(load_config(kMiniConf)) + "\n";
    for (const char* f : {"covariates.csv", "step1_fit.txt", "step2_fit.txt", "state_path.csv",
                          "site_predictions.csv", "metrics.csv", "grid_ci.csv", "grid/no2_day0001.asc"}) {
        INFO(f);
        REQUIRE(ta.count(std::string("out/") + f));
        CHECK(ta.at(std::string("out/") + f).rfind(header, 0) == 0);
    }

    const auto out = (a / "out").string();
    const auto data = (a / "data").string();
    fs::copy_file(a / "out" / "metrics.csv", a / "golden.csv");
    CHECK(run_cli({"validate", data, "--config", kMiniConf, "--out", out, "--golden", (a / "golden.csv").string()}) ==
          0);
    write_text_file(a / "golden.csv", "# other\nsite_id\n");
    CHECK(run_cli({"validate", data, "--config", kMiniConf, "--out", out, "--golden", (a / "golden.csv").string()}) ==
          1);
    CHECK(run_cli({"predict", data, "--config", kMiniConf, "--out", out, "--smoothed"}) == 0);
    CHECK(read_text_file(a / "out" / "metrics.csv") != ta.at("out/metrics.csv"));
}
