#include <cmath>
#include <limits>

#include "scarr/covariates.hpp"
#include "scarr/error.hpp"
#include "scarr/step1.hpp"
#include "scarr/step2.hpp"

namespace scarr::step2 {

DlmInputs build_inputs(const Dataset& ds, const step1::StepOneFit& fit, Exec exec)
{
    std::vector<SiteRecord> dense;
    for (const auto& s : ds.sites)
        if (s.role == SiteRole::dense_time)
            dense.push_back(s);
    if (dense.empty())
        throw DataError("step2: dataset has no dense_time sites");
    const auto gamma = fit.coefficient("cmaq");
    if (!gamma)
        throw DataError("step2: Step I fit has no cmaq coefficient");

    const auto src = make_sources(ds, fit.radii);
    auto covs = site_covariates_batch(dense, src, exec);
    for (std::size_t j = 0; j < dense.size(); ++j)
        if (auto e = ds.elevation_m.find(dense[j].id); e != ds.elevation_m.end())
            covs[j].elevation_m = e->second;
    const auto cal = Calendar::parse(ds.manifest.get("epoch", "1994-01-01"));
    const int T = ds.day_count();
    const auto n = static_cast<Eigen::Index>(dense.size());
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();

    DlmInputs in;
    in.y = Eigen::MatrixXd::Constant(T, n, nan);
    in.ctilde.resize(T, n);
    in.cmaq.resize(T, n);
    for (int t = 0; t < T; ++t)
        in.days.push_back(t + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& site = dense[i];
        in.site_ids.push_back(site.id);
        const auto* series = ds.find_series(site.id);
        const auto& pixel = ds.cmaq.series(covs[i].cmaq_pixel);
        for (int t = 0; t < T; ++t) {
            const int day = t + 1;
            in.ctilde(t, i) = step1::additive_bias_c_tilde(fit, covs[i], seasonal_basis(day_dyr(cal, day)));
            const auto c = pixel.at(day);
            in.cmaq(t, i) = c ? *c : nan;
            if (series && c)
                if (const auto v = series->at(day))
                    in.y(t, i) = *v;
        }
    }
    return in;
}

DlmInputs augment(const DlmInputs& in, const std::vector<std::string>& ids, const Eigen::MatrixXd& ctilde,
                  const Eigen::MatrixXd& cmaq)
{
    const auto k = static_cast<Eigen::Index>(ids.size());
    if (ctilde.rows() != in.y.rows() || cmaq.rows() != in.y.rows() || ctilde.cols() != k || cmaq.cols() != k)
        throw DataError("augment: covariate matrices must be T x (new sites)");
    DlmInputs out = in;
    const auto n = in.y.cols();
    out.y.conservativeResize(Eigen::NoChange, n + k);
    out.ctilde.conservativeResize(Eigen::NoChange, n + k);
    out.cmaq.conservativeResize(Eigen::NoChange, n + k);
    out.y.rightCols(k).setConstant(std::numeric_limits<double>::quiet_NaN());
    out.ctilde.rightCols(k) = ctilde;
    out.cmaq.rightCols(k) = cmaq;
    out.site_ids.insert(out.site_ids.end(), ids.begin(), ids.end());
    return out;
}

} // namespace scarr::step2
