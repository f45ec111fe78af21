#include <cmath>
#include <numbers>

#include "scarr/error.hpp"
#include "scarr/step2.hpp"
#include "step2_internal.hpp"

namespace scarr::step2 {

void DlmParams::validate() const
{
    for (double v : {sigma_z, sigma_a, psi_a, mu_a, beta_c, gamma_hat})
        if (!std::isfinite(v))
            throw ConfigError("DLM parameters must be finite");
    if (!(sigma_z > 0))
        throw ConfigError("DLM: sigma_z must be positive");
    if (!(sigma_a >= 0))
        throw ConfigError("DLM: sigma_a must be non-negative");
    if (!(psi_a >= 0 && psi_a < 1))
        throw ConfigError("DLM: psi_a must lie in [0,1)");
}

int DlmInputs::observed_entries() const
{
    int k = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        k += std::isnan(y.data()[i]) ? 0 : 1;
    return k;
}

int DlmInputs::observed_days() const
{
    int k = 0;
    for (Eigen::Index t = 0; t < y.rows(); ++t)
        k += y.row(t).array().isNaN().all() ? 0 : 1;
    return k;
}

void DlmInputs::validate() const
{
    if (y.rows() < 1)
        throw DataError("DLM inputs: need at least one day");
    if (ctilde.rows() != y.rows() || ctilde.cols() != y.cols() || cmaq.rows() != y.rows() ||
        cmaq.cols() != y.cols())
        throw DataError("DLM inputs: y, ctilde and cmaq must have the same shape");
    if (static_cast<Eigen::Index>(site_ids.size()) != y.cols())
        throw DataError("DLM inputs: one site id per column required");
    if (static_cast<Eigen::Index>(days.size()) != y.rows())
        throw DataError("DLM inputs: one day number per row required");
    for (Eigen::Index t = 0; t < y.rows(); ++t)
        for (Eigen::Index i = 0; i < y.cols(); ++i) {
            const double v = y(t, i);
            if (std::isnan(v))
                continue;
            if (!std::isfinite(v) || !std::isfinite(ctilde(t, i)) || !std::isfinite(cmaq(t, i)))
                throw DataError("DLM inputs: non-finite value at day " + std::to_string(days[t]) + ", site '" +
                                site_ids[i] + "'");
        }
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// No validation: the Hessian stencil steps psi_a slightly below zero.
StateEstimate filter_core(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts)
{
    const int T = in.T();
    const int n = in.n();
    StateEstimate e;
    e.pred_mean.resize(T);
    e.pred_var.resize(T);
    e.filt_mean.resize(T);
    e.filt_var.resize(T);
    e.loglik_terms.resize(T);
    const double s2 = p.sigma_z * p.sigma_z;
    const double q = p.sigma_a * p.sigma_a;
    double m = p.mu_a;
    double P = opts.initial_variance ? *opts.initial_variance : q / (1.0 - p.psi_a * p.psi_a);
    e.loglik = 0.0;
    for (int t = 0; t < T; ++t) {
        e.pred_mean[t] = m;
        e.pred_var[t] = P;
        int k = 0;
        double sum_v = 0.0, sum_v2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double y = in.y(t, i);
            if (std::isnan(y))
                continue;
            const double v = y - m - p.beta_c * in.ctilde(t, i) - p.gamma_hat * in.cmaq(t, i);
            sum_v += v;
            sum_v2 += v * v;
            ++k;
        }
        double ll = 0.0;
        if (k > 0) {
            // S = P 11' + s2 I: |S| = s2^(k-1) (s2 + kP), S^-1 = (I - P/(s2+kP) 11') / s2
            const double denom = s2 + k * P;
            const double g = P / denom;
            ll = -0.5 * (k * kLog2Pi + (k - 1) * std::log(s2) + std::log(denom) +
                         (sum_v2 - g * sum_v * sum_v) / s2);
            m += g * sum_v;
            P = P * s2 / denom;
        }
        e.filt_mean[t] = m;
        e.filt_var[t] = P;
        e.loglik_terms[t] = ll;
        e.loglik += ll;
        m = p.mu_a + p.psi_a * (m - p.mu_a);
        P = p.psi_a * p.psi_a * P + q;
    }
    return e;
}

} // namespace

StateEstimate kalman_filter(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts)
{
    p.validate();
    in.validate();
    if (opts.initial_variance && !(*opts.initial_variance >= 0))
        throw ConfigError("DLM: initial variance must be non-negative");
    return filter_core(p, in, opts);
}

StateEstimate kalman_smoother(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts)
{
    StateEstimate e = kalman_filter(p, in, opts);
    const int T = in.T();
    e.smooth_mean.resize(T);
    e.smooth_var.resize(T);
    e.smooth_mean[T - 1] = e.filt_mean[T - 1];
    e.smooth_var[T - 1] = e.filt_var[T - 1];
    for (int t = T - 2; t >= 0; --t) {
        const double pp = e.pred_var[t + 1];
        const double J = pp > 0 ? e.filt_var[t] * p.psi_a / pp : 0.0;
        e.smooth_mean[t] = e.filt_mean[t] + J * (e.smooth_mean[t + 1] - e.pred_mean[t + 1]);
        e.smooth_var[t] = e.filt_var[t] + J * J * (e.smooth_var[t + 1] - pp);
    }
    return e;
}

double log_likelihood(const DlmParams& p, const DlmInputs& in, const FilterOptions& opts)
{
    return kalman_filter(p, in, opts).loglik;
}

double log_likelihood_unchecked(const DlmParams& p, const DlmInputs& in)
{
    return filter_core(p, in, {}).loglik;
}

} // namespace scarr::step2
