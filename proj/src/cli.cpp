#include "scarr/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scarr/config.hpp"
#include "scarr/covariates.hpp"
#include "scarr/csv.hpp"
#include "scarr/data_model.hpp"
#include "scarr/error.hpp"
#include "scarr/oracle.hpp"
#include "scarr/parallel.hpp"
#include "scarr/prediction.hpp"
#include "scarr/step1.hpp"
#include "scarr/step2.hpp"
#include "scarr/text.hpp"

namespace fs = std::filesystem;

namespace scarr::cli {

namespace {

constexpr const char* kRunConfigName = "run.conf";

struct Flags {
    std::string dir;
    std::string config;
    std::string out;
    std::string golden;
    int jobs = 0;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    bool smoothed = false;
    bool have_seed = false;
    bool have_alpha = false;
    bool have_jobs = false;
};

void log(const std::string& msg)
{
    std::cerr << "scarr: " << msg << '\n';
}

struct Context {
    RunConfig cfg;
    fs::path dataset;
    fs::path out;
    std::string header;
};

int resolve_jobs(const Flags& f)
{
    if (f.have_jobs)
        return f.jobs;
    if (const char* env = std::getenv("SCARR_JOBS")) {
        const auto v = parse_int(env);
        if (!v || *v < 1)
            throw ConfigError(std::string("SCARR_JOBS: expected a positive integer, got '") + env + "'");
        return static_cast<int>(*v);
    }
    return 0;
}

/// Config precedence: --config, then DIR/run.conf written by `simulate`,
/// then built-in defaults. Flags override config values.
Context make_context(const Flags& f, bool dataset_must_exist)
{
    Context c;
    c.dataset = f.dir.empty() ? fs::path(f.out) : fs::path(f.dir);
    if (c.dataset.empty())
        throw ConfigError("no dataset directory given");
    if (dataset_must_exist && !fs::is_directory(c.dataset))
        throw ConfigError("dataset directory '" + c.dataset.string() + "' does not exist");
    c.out = f.out.empty() ? c.dataset : fs::path(f.out);

    if (!f.config.empty())
        c.cfg = load_config(f.config);
    else if (dataset_must_exist && fs::exists(c.dataset / kRunConfigName))
        c.cfg = load_config(c.dataset / kRunConfigName);
    if (f.have_seed)
        c.cfg.simulate.seed = f.seed;
    if (f.have_alpha) {
        if (!(f.alpha > 0.0 && f.alpha < 1.0))
            throw ConfigError("--alpha must lie in (0, 1)");
        c.cfg.step1.alpha = f.alpha;
    }
    if (f.smoothed)
        c.cfg.predict.smoothed = true;

    const int jobs = resolve_jobs(f);
    if (jobs < 0)
        throw ConfigError("--jobs must be positive");
    set_worker_count(jobs);
    c.header = header_comment(config_hash(c.cfg));
    fs::create_directories(c.out);
    return c;
}

std::vector<CovariateRow> load_or_build_rows(const Context& c, const Dataset& ds)
{
    const auto path = c.out / "covariates.csv";
    if (!fs::exists(path)) {
        log("covariates.csv not found, computing covariates");
        return build_covariate_rows(ds, c.cfg.step1.radii);
    }
    BufferSpec traffic, landuse;
    auto rows = covariates_from_csv(read_text_file(path), traffic, landuse);
    if (traffic.radii_km != c.cfg.step1.radii.radii_km)
        throw ConfigError("covariates.csv was built with radii_km=" + join_numbers(traffic.radii_km) +
                          " but the configuration uses " + join_numbers(c.cfg.step1.radii.radii_km));
    return rows;
}

step1::Step1Record load_step1(const Context& c)
{
    const auto path = c.out / "step1_fit.txt";
    if (!fs::exists(path))
        throw ConfigError("'" + path.string() + "' not found; run fit-step1 first");
    return step1::record_from_text(read_text_file(path));
}

step2::MleResult load_step2(const Context& c)
{
    const auto path = c.out / "step2_fit.txt";
    if (!fs::exists(path))
        throw ConfigError("'" + path.string() + "' not found; run fit-step2 first");
    return step2::fit_from_text(read_text_file(path));
}

void cmd_simulate(const Context& c)
{
    auto sim = oracle::simulate_step1_dataset(c.cfg.simulate);
    sim.dataset.provenance = c.header.substr(2);
    write_dataset(sim.dataset, c.out);
    write_text_file(c.out / "truth.txt", c.header + "\n" + sim.truth_text);
    write_text_file(c.out / kRunConfigName, c.header + "\n" + canonical_text(c.cfg));
    log("wrote dataset with " + std::to_string(sim.dataset.sites.size()) + " sites to " + c.out.string());
}

void cmd_features(const Context& c)
{
    const auto ds = load_dataset(c.dataset);
    const auto& radii = c.cfg.step1.radii;
    const auto rows = build_covariate_rows(ds, radii);
    const auto lu = radii.first(std::min<std::size_t>(3, radii.rings()));
    write_text_file(c.out / "covariates.csv", covariates_to_csv(rows, radii, lu, c.header));
    log("wrote " + std::to_string(rows.size()) + " covariate rows");
}

void cmd_fit_step1(const Context& c)
{
    const auto ds = load_dataset(c.dataset);
    const auto rows = load_or_build_rows(c, ds);
    const auto result = step1::run_step1(ds, rows, c.cfg.step1);
    for (const auto& line : result.selection.log)
        log(line);
    for (const auto& w : result.warnings)
        log("warning: " + w);
    const auto rec = step1::make_record(result, c.cfg.step1, c.header);
    write_text_file(c.out / "step1_fit.txt", step1::record_to_text(rec));
    log("step1: n=" + std::to_string(result.fit.n) + " p=" + std::to_string(result.fit.p) +
        " r2=" + format_g6(result.fit.r2));
}

void cmd_fit_step2(const Context& c)
{
    const auto ds = load_dataset(c.dataset);
    const auto s1 = load_step1(c);
    const auto gamma = s1.fit.coefficient("cmaq");
    if (!gamma)
        throw DataError("step1_fit.txt has no cmaq coefficient");
    const auto in = step2::build_inputs(ds, s1.fit);
    const auto fit = step2::fit_mle(in, *gamma, c.cfg.step2);
    for (const auto& line : fit.log)
        log(line);
    write_text_file(c.out / "step2_fit.txt", step2::fit_to_text(fit, c.header));
    const auto est = step2::kalman_smoother(fit.params, in);
    write_text_file(c.out / "state_path.csv", step2::state_path_csv(in, est, c.header));
    log("step2: loglik=" + format_g6(fit.loglik) + (fit.converged ? "" : " (not converged)"));
}

prediction::MetricsReport compute_metrics(const Context& c, const Dataset& ds, const step1::Step1Record& s1,
                                          const step2::MleResult& s2, const step2::DlmInputs& in,
                                          std::vector<prediction::SitePrediction>* preds)
{
    prediction::PredictOptions opts;
    opts.smoothed = c.cfg.predict.smoothed;
    opts.mean_only = c.cfg.predict.mean_only;
    return prediction::evaluate(ds, s1.fit, s2.params, in, opts, preds);
}

void cmd_predict(const Context& c)
{
    const auto ds = load_dataset(c.dataset);
    const auto s1 = load_step1(c);
    const auto s2 = load_step2(c);
    const auto in = step2::build_inputs(ds, s1.fit);
    std::vector<prediction::SitePrediction> preds;
    const auto report = compute_metrics(c, ds, s1, s2, in, &preds);
    write_text_file(c.out / "site_predictions.csv", prediction::site_predictions_csv(preds, c.header));
    write_text_file(c.out / "metrics.csv", prediction::metrics_csv(report, c.header));

    const auto& p = c.cfg.predict;
    if (!p.grid)
        return;
    if (!ds.prediction_mask) {
        log("dataset has no prediction mask, skipping grid output");
        return;
    }
    if (p.last_day > in.T())
        throw ConfigError("predict.last_day=" + std::to_string(p.last_day) + " exceeds the " +
                          std::to_string(in.T()) + " dataset days");
    prediction::PredictOptions opts;
    opts.smoothed = p.smoothed;
    opts.mean_only = p.mean_only;
    const auto days = prediction::predict_grid(ds, s1.fit, s2.params, in, *ds.prediction_mask, p.first_day,
                                               p.last_day, opts);
    const auto grid_dir = c.out / "grid";
    fs::create_directories(grid_dir);
    std::ostringstream ci;
    ci << c.header << '\n' << "day,half_width\n";
    for (const auto& d : days) {
        write_raster(grid_dir / prediction::grid_file_name(d.day), d.raster, c.header);
        ci << d.day << ',' << format_number(d.half_width) << '\n';
    }
    write_text_file(c.out / "grid_ci.csv", ci.str());
    log("wrote " + std::to_string(days.size()) + " grid days");
}

int cmd_validate(const Context& c, const Flags& f)
{
    const fs::path golden = f.golden.empty() ? c.dataset / "golden_metrics.csv" : fs::path(f.golden);
    if (!fs::exists(golden))
        throw ConfigError("golden file '" + golden.string() + "' does not exist");
    const auto ds = load_dataset(c.dataset);
    const auto s1 = load_step1(c);
    const auto s2 = load_step2(c);
    const auto in = step2::build_inputs(ds, s1.fit);
    const auto text = prediction::metrics_csv(compute_metrics(c, ds, s1, s2, in, nullptr), c.header);
    const auto expected = read_text_file(golden);
    if (text == expected) {
        log("validate: metrics match " + golden.string());
        return 0;
    }
    std::istringstream a(text), b(expected);
    std::string la, lb;
    int line = 0;
    while (true) {
        ++line;
        const bool ga = static_cast<bool>(std::getline(a, la));
        const bool gb = static_cast<bool>(std::getline(b, lb));
        if (!ga && !gb)
            break;
        if (!ga || !gb || la != lb) {
            std::cerr << "scarr: error=validation line=" << line << " got='" << (ga ? la : "<eof>")
                      << "' expected='" << (gb ? lb : "<eof>") << "'\n";
            break;
        }
    }
    return 1;
}

const char* kind_of(const Error& e)
{
    switch (e.exit_code()) {
    case 2:
        return "config";
    case 3:
        return "data";
    case 4:
        return "numerical";
    default:
        return "runtime";
    }
}

std::string one_line(std::string s)
{
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r')
            ch = ' ';
    return s;
}

} // namespace

int run(int argc, const char* const* argv)
{
    CLI::App app{"Two-step calibration of gridded air-quality model output against monitor data", "scarr"};
    app.set_version_flag("--version", "scarr 0.1.0");
    app.require_subcommand(1, 1);

    Flags f;
    auto common = [&](CLI::App* sub, bool dir_required) {
        auto* d = sub->add_option("dir", f.dir, "dataset directory");
        if (dir_required)
            d->required();
        sub->add_option("--config", f.config, "run configuration file");
        sub->add_option("--out", f.out, "output directory (default: the dataset directory)");
        sub->add_option("--jobs", f.jobs, "worker threads for parallel stages (env SCARR_JOBS)")
            ->check(CLI::PositiveNumber)
            ->each([&](const std::string&) { f.have_jobs = true; });
        sub->add_option("--seed", f.seed, "simulation seed")->each([&](const std::string&) { f.have_seed = true; });
        sub->add_option("--alpha", f.alpha, "selection significance level")
            ->each([&](const std::string&) { f.have_alpha = true; });
        sub->add_flag("--smoothed", f.smoothed, "condition predictions on all days");
    };
    auto* sim = app.add_subcommand("simulate", "write a synthetic dataset");
    common(sim, false);
    auto* feat = app.add_subcommand("features", "compute covariates.csv");
    common(feat, true);
    auto* s1 = app.add_subcommand("fit-step1", "spatial regression and buffer selection");
    common(s1, true);
    auto* s2 = app.add_subcommand("fit-step2", "state-space maximum likelihood");
    common(s2, true);
    auto* pr = app.add_subcommand("predict", "site and grid predictions with metrics");
    common(pr, true);
    auto* va = app.add_subcommand("validate", "recompute metrics and compare against a golden file");
    common(va, true);
    va->add_option("--golden", f.golden, "golden metrics file (default: DIR/golden_metrics.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << "scarr 0.1.0\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "scarr: error=usage message='" << one_line(e.what()) << "'\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        if (sim->parsed()) {
            if (f.dir.empty() && f.out.empty())
                throw ConfigError("simulate needs an output directory (--out or DIR)");
            if (f.out.empty())
                f.out = f.dir;
            f.dir = f.out;
            cmd_simulate(make_context(f, false));
        } else if (feat->parsed()) {
            cmd_features(make_context(f, true));
        } else if (s1->parsed()) {
            cmd_fit_step1(make_context(f, true));
        } else if (s2->parsed()) {
            cmd_fit_step2(make_context(f, true));
        } else if (pr->parsed()) {
            cmd_predict(make_context(f, true));
        } else if (va->parsed()) {
            return cmd_validate(make_context(f, true), f);
        }
    } catch (const Error& e) {
        std::cerr << "scarr: error=" << kind_of(e) << " message='" << one_line(e.what()) << "'\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "scarr: error=runtime message='" << one_line(e.what()) << "'\n";
        return 1;
    }
    return 0;
}

} // namespace scarr::cli
