#include <cmath>
#include <numbers>

#include "scarr/error.hpp"
#include "scarr/oracle.hpp"

namespace scarr::oracle {

DenseGaussianOracle::DenseGaussianOracle(const step2::DlmParams& p, const step2::DlmInputs& in,
                                         std::optional<double> initial_variance)
    : p_(p), T_(in.T()), n_(in.n())
{
    p.validate();
    in.validate();
    if (T_ > kOracleMaxDays || n_ > kOracleMaxSites)
        throw ConfigError("dense oracle: instance too large (T <= 12, n <= 4)");

    // Var(A_1) = P0, Var(A_{t+1}) = psi^2 Var(A_t) + sigma_a^2,
    // Cov(A_t, A_s) = psi^(s-t) Var(A_t) for s >= t.
    const double q = p.sigma_a * p.sigma_a;
    std::vector<double> var(T_);
    var[0] = initial_variance ? *initial_variance : q / (1.0 - p.psi_a * p.psi_a);
    for (int t = 1; t < T_; ++t)
        var[t] = p.psi_a * p.psi_a * var[t - 1] + q;
    state_cov_.resize(T_, T_);
    for (int t = 0; t < T_; ++t)
        for (int s = t; s < T_; ++s)
            state_cov_(t, s) = state_cov_(s, t) = std::pow(p.psi_a, s - t) * var[t];

    for (int t = 0; t < T_; ++t)
        for (int i = 0; i < n_; ++i)
            if (!std::isnan(in.y(t, i)))
                obs_.emplace_back(t, i);
    const auto m = static_cast<Eigen::Index>(obs_.size());
    obs_value_.resize(m);
    obs_mean_.resize(m);
    obs_cov_.resize(m, m);
    const double s2 = p.sigma_z * p.sigma_z;
    for (Eigen::Index a = 0; a < m; ++a) {
        const auto [t, i] = obs_[a];
        obs_value_[a] = in.y(t, i);
        obs_mean_[a] = p.mu_a + p.beta_c * in.ctilde(t, i) + p.gamma_hat * in.cmaq(t, i);
        for (Eigen::Index b = 0; b < m; ++b)
            obs_cov_(a, b) = state_cov_(t, obs_[b].first) + (a == b ? s2 : 0.0);
    }
    means_ctilde_ = in.ctilde;
    means_cmaq_ = in.cmaq;
}

Moments DenseGaussianOracle::condition(const Eigen::VectorXd& cross, double prior_mean, double prior_var,
                                       int through, int skip) const
{
    std::vector<Eigen::Index> idx;
    for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(obs_.size()); ++a)
        if (obs_[a].first <= through && a != skip)
            idx.push_back(a);
    if (idx.empty())
        return {prior_mean, prior_var};
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd S(k, k);
    Eigen::VectorXd c(k), r(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        c[a] = cross[idx[a]];
        r[a] = obs_value_[idx[a]] - obs_mean_[idx[a]];
        for (Eigen::Index b = 0; b < k; ++b)
            S(a, b) = obs_cov_(idx[a], idx[b]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        throw NumericalError("dense oracle: observation covariance not positive definite");
    const Eigen::VectorXd w = llt.solve(c);
    return {prior_mean + w.dot(r), prior_var - w.dot(c)};
}

Moments DenseGaussianOracle::state(int t, int through) const
{
    if (t < 0 || t >= T_)
        throw ConfigError("dense oracle: day out of range");
    Eigen::VectorXd cross(static_cast<Eigen::Index>(obs_.size()));
    for (Eigen::Index a = 0; a < cross.size(); ++a)
        cross[a] = state_cov_(t, obs_[a].first);
    return condition(cross, p_.mu_a, state_cov_(t, t), through, -1);
}

Moments DenseGaussianOracle::observation(int t, int i, int through) const
{
    if (t < 0 || t >= T_ || i < 0 || i >= n_)
        throw ConfigError("dense oracle: entry out of range");
    int skip = -1;
    Eigen::VectorXd cross(static_cast<Eigen::Index>(obs_.size()));
    for (Eigen::Index a = 0; a < cross.size(); ++a) {
        cross[a] = state_cov_(t, obs_[a].first);
        if (obs_[a] == std::make_pair(t, i))
            skip = static_cast<int>(a);
    }
    const double mean = p_.mu_a + p_.beta_c * means_ctilde_(t, i) + p_.gamma_hat * means_cmaq_(t, i);
    const double var = state_cov_(t, t) + p_.sigma_z * p_.sigma_z;
    return condition(cross, mean, var, through, skip);
}

double DenseGaussianOracle::log_density() const
{
    const auto m = obs_value_.size();
    if (m == 0)
        return 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(obs_cov_);
    if (llt.info() != Eigen::Success)
        throw NumericalError("dense oracle: observation covariance not positive definite");
    const Eigen::VectorXd r = obs_value_ - obs_mean_;
    const Eigen::VectorXd z = llt.matrixL().solve(r);
    double logdet = 0.0;
    for (Eigen::Index a = 0; a < m; ++a)
        logdet += 2.0 * std::log(llt.matrixL()(a, a));
    return -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
}

} // namespace scarr::oracle
