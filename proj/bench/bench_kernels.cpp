// Serial vs OpenMP timings for the batch kernels.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scarr/covariates.hpp"
#include "scarr/oracle.hpp"
#include "scarr/parallel.hpp"
#include "scarr/prediction.hpp"
#include "scarr/rng.hpp"
#include "scarr/step1.hpp"

using namespace scarr;

namespace {

double median_ms(int reps, const std::function<void()>& f)
{
    std::vector<double> t;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

void row(const char* name, int reps, const std::function<void(Exec)>& f)
{
    const double s = median_ms(reps, [&] { f(Exec::serial); });
    const double p = median_ms(reps, [&] { f(Exec::parallel); });
    std::printf("%-22s %10.2f %10.2f %8.2fx\n", name, s, p, s / p);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"scarr kernel benchmark"};
    int reps = 5;
    int jobs = 0;
    int n_cal = 150;
    int points = 2000;
    app.add_option("--reps", reps, "repetitions per kernel")->check(CLI::PositiveNumber);
    app.add_option("--jobs", jobs, "worker threads (0: runtime default)");
    app.add_option("--sites", n_cal, "calibration sites")->check(CLI::PositiveNumber);
    app.add_option("--points", points, "locations for the covariate batch")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    set_worker_count(jobs);

    oracle::SimulationConfig cfg;
    cfg.T = 120;
    cfg.n_calibration = n_cal;
    const auto sim = oracle::simulate_step1_dataset(cfg);
    const auto& ds = sim.dataset;
    const auto radii = BufferSpec::standard();
    const auto src = make_sources(ds, radii);

    Rng rng(1);
    std::vector<SiteRecord> locs;
    for (int i = 0; i < points; ++i)
        locs.push_back(SiteRecord{"p" + std::to_string(i), rng.uniform(cfg.site_margin_m, cfg.domain_m - cfg.site_margin_m),
                                  rng.uniform(cfg.site_margin_m, cfg.domain_m - cfg.site_margin_m)});

    const auto rows = build_covariate_rows(ds, radii);
    step1::Step1Config s1;
    const auto design = step1::assemble_design(ds, rows, s1, s1.full_selection());
    const auto fit = step1::run_step1(ds, rows, s1).fit;

    std::printf("workers %d, reps %d, %d calibration sites, %d points, mask %zu cells\n", worker_count(), reps, n_cal,
                points, ds.prediction_mask->size());
    std::printf("%-22s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
    row("covariate batch", reps, [&](Exec e) { site_covariates_batch(locs, src, e); });
    row("grid static terms", reps, [&](Exec e) { prediction::grid_static_terms(ds, fit, *ds.prediction_mask, e); });
    row("loocv refit", reps, [&](Exec e) { step1::loocv_press_refit(design, e); });
    row("quadrant dispersion", reps, [&](Exec e) { step1::quadrant_dispersion(ds, rows, radii, 3, {"intercept"}, e); });
    return 0;
}
