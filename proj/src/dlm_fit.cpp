#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "scarr/error.hpp"
#include "scarr/optimize.hpp"
#include "scarr/step2.hpp"
#include "scarr/text.hpp"
#include "step2_internal.hpp"

namespace scarr::step2 {

namespace {

double logistic(double u)
{
    return 1.0 / (1.0 + std::exp(-u));
}

double logit(double p)
{
    return std::log(p / (1.0 - p));
}

// Free coordinates: (log sigma_z, log sigma_a, logit psi_a, [mu_a], beta_c).
DlmParams from_free(const Eigen::VectorXd& u, bool fit_mu, double gamma_hat)
{
    DlmParams p;
    p.sigma_z = std::exp(u[0]);
    p.sigma_a = std::exp(u[1]);
    p.psi_a = logistic(u[2]);
    p.mu_a = fit_mu ? u[3] : 0.0;
    p.beta_c = u[fit_mu ? 4 : 3];
    p.gamma_hat = gamma_hat;
    return p;
}

Eigen::VectorXd to_free(const DlmParams& p, bool fit_mu)
{
    Eigen::VectorXd u(fit_mu ? 5 : 4);
    const double psi = std::clamp(p.psi_a, 1e-6, 1.0 - 1e-6);
    u[0] = std::log(p.sigma_z);
    u[1] = std::log(std::max(p.sigma_a, 1e-8));
    u[2] = logit(psi);
    if (fit_mu)
        u[3] = p.mu_a;
    u[fit_mu ? 4 : 3] = p.beta_c;
    return u;
}

// Moment-based starting point: pooled regression of y - gamma*cmaq on
// ctilde, then daily means of the residuals for the state.
DlmParams moment_start(const DlmInputs& in, double gamma_hat)
{
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int t = 0; t < in.T(); ++t)
        for (int i = 0; i < in.n(); ++i) {
            if (std::isnan(in.y(t, i)))
                continue;
            const double x = in.ctilde(t, i);
            const double r = in.y(t, i) - gamma_hat * in.cmaq(t, i);
            sw += 1;
            sx += x;
            sy += r;
            sxx += x * x;
            sxy += x * r;
        }
    DlmParams p;
    p.gamma_hat = gamma_hat;
    const double vx = sxx - sx * sx / sw;
    p.beta_c = vx > 0 ? (sxy - sx * sy / sw) / vx : 0.0;
    p.mu_a = (sy - p.beta_c * sx) / sw;

    std::vector<double> day_mean(in.T(), std::numeric_limits<double>::quiet_NaN());
    double within = 0;
    int within_n = 0;
    for (int t = 0; t < in.T(); ++t) {
        double s = 0;
        int k = 0;
        std::vector<double> e;
        for (int i = 0; i < in.n(); ++i) {
            if (std::isnan(in.y(t, i)))
                continue;
            e.push_back(in.y(t, i) - gamma_hat * in.cmaq(t, i) - p.beta_c * in.ctilde(t, i) - p.mu_a);
            s += e.back();
            ++k;
        }
        if (k == 0)
            continue;
        day_mean[t] = s / k;
        for (double v : e)
            within += (v - day_mean[t]) * (v - day_mean[t]);
        within_n += k - 1;
    }
    const double s2 = within_n > 0 ? within / within_n : 1.0;
    double m0 = 0, c0 = 0, c1 = 0;
    int n0 = 0, n1 = 0;
    for (int t = 0; t < in.T(); ++t)
        if (!std::isnan(day_mean[t])) {
            m0 += day_mean[t];
            ++n0;
        }
    m0 /= std::max(n0, 1);
    for (int t = 0; t < in.T(); ++t) {
        if (std::isnan(day_mean[t]))
            continue;
        c0 += (day_mean[t] - m0) * (day_mean[t] - m0);
        if (t + 1 < in.T() && !std::isnan(day_mean[t + 1])) {
            c1 += (day_mean[t] - m0) * (day_mean[t + 1] - m0);
            ++n1;
        }
    }
    c0 /= std::max(n0, 1);
    c1 /= std::max(n1, 1);
    const double var_a = std::max(c0 - s2 / std::max(1, in.n()), 0.05 * c0 + 1e-6);
    p.psi_a = std::clamp(c0 > 0 ? c1 / c0 : 0.5, 0.05, 0.95);
    p.sigma_a = std::sqrt(var_a * (1.0 - p.psi_a * p.psi_a));
    p.sigma_z = std::sqrt(std::max(s2, 1e-6));
    return p;
}

struct Attempt {
    OptimResult opt;
    DlmParams params;
};

std::optional<Attempt> best_of(const DlmInputs& in, double gamma_hat, bool fit_mu,
                               const std::vector<DlmParams>& starts, const Step2Config& cfg, MleResult& out)
{
    const double scale = 1.0 / std::max(1, in.observed_entries());
    Objective f = [&](const Eigen::VectorXd& u) {
        const auto p = from_free(u, fit_mu, gamma_hat);
        if (!(p.psi_a < 1.0) || !(p.sigma_z > 0))
            return std::numeric_limits<double>::infinity();
        return -scale * log_likelihood_unchecked(p, in);
    };
    BfgsOptions bo;
    bo.gradient_tol = cfg.gradient_tol;
    bo.step_tol = cfg.step_tol;
    bo.max_iter = cfg.max_iter;
    bo.exec = cfg.exec;
    std::optional<Attempt> best;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        auto r = bfgs(f, to_free(starts[s], fit_mu), bo);
        out.iterations += r.iterations;
        std::ostringstream msg;
        msg << (fit_mu ? "full" : "mu_a=0") << " start " << s + 1 << ": -loglik/obs=" << format_number(r.value)
            << " iterations=" << r.iterations << (r.converged ? " converged" : " not converged");
        out.log.push_back(msg.str());
        if (!r.converged || !std::isfinite(r.value))
            continue;
        ++out.starts_converged;
        if (!best || r.value < best->opt.value)
            best = Attempt{r, from_free(r.x, fit_mu, gamma_hat)};
    }
    return best;
}

std::vector<DlmParams> start_points(const DlmParams& m)
{
    std::vector<DlmParams> s(3, m);
    s[1].psi_a = 0.2;
    s[1].sigma_a = m.sigma_a * 0.5;
    s[1].sigma_z = m.sigma_z * 1.5;
    s[2].psi_a = 0.8;
    s[2].sigma_a = m.sigma_a * 1.5 + 1e-3;
    s[2].sigma_z = m.sigma_z * 0.75;
    return s;
}

} // namespace

StandardErrors standard_errors(const DlmParams& p, const DlmInputs& in)
{
    const bool fit_mu = !p.mu_dropped;
    const int k = fit_mu ? 5 : 4;
    Eigen::VectorXd theta(k);
    theta[0] = p.sigma_z;
    theta[1] = p.sigma_a;
    theta[2] = p.psi_a;
    if (fit_mu)
        theta[3] = p.mu_a;
    theta[k - 1] = p.beta_c;
    auto unpack = [&](const Eigen::VectorXd& th) {
        DlmParams q = p;
        q.sigma_z = th[0];
        q.sigma_a = th[1];
        q.psi_a = th[2];
        q.mu_a = fit_mu ? th[3] : 0.0;
        q.beta_c = th[fit_mu ? 4 : 3];
        return q;
    };
    Objective f = [&](const Eigen::VectorXd& th) {
        const auto q = unpack(th);
        if (!(std::abs(q.psi_a) < 1.0) || q.sigma_z == 0.0)
            return std::numeric_limits<double>::quiet_NaN();
        return -log_likelihood_unchecked(q, in);
    };
    StandardErrors se;
    const Eigen::MatrixXd H = numeric_hessian(f, theta, 1e-4);
    if (!H.allFinite())
        return se;
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (H + H.transpose()));
    if (llt.info() != Eigen::Success)
        return se;
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(k, k));
    auto sd = [&](int i) -> std::optional<double> {
        const double v = cov(i, i);
        return v > 0 && std::isfinite(v) ? std::optional<double>(std::sqrt(v)) : std::nullopt;
    };
    se.sigma_z = sd(0);
    se.sigma_a = sd(1);
    se.psi_a = sd(2);
    if (fit_mu)
        se.mu_a = sd(3);
    se.beta_c = sd(fit_mu ? 4 : 3);
    return se;
}

MleResult fit_mle(const DlmInputs& in, double gamma_hat, const Step2Config& cfg)
{
    in.validate();
    if (!std::isfinite(gamma_hat))
        throw ConfigError("fit_mle: gamma_hat must be finite");
    if (cfg.multistarts < 1 || cfg.multistarts > 3)
        throw ConfigError("step2.multistarts: must be 1, 2 or 3");
    const int needed = cfg.min_days_per_param * 5;
    if (in.observed_days() < needed)
        throw DataError("fit_mle: " + std::to_string(in.observed_days()) + " observed days, need at least " +
                        std::to_string(needed));

    MleResult out;
    auto starts = start_points(moment_start(in, gamma_hat));
    starts.resize(static_cast<std::size_t>(cfg.multistarts));
    auto best = best_of(in, gamma_hat, true, starts, cfg, out);
    if (!best)
        throw NumericalError("fit_mle: no start converged");
    DlmParams p = best->params;
    p.se = standard_errors(p, in);

    if (cfg.drop_mu_a && p.se.mu_a && std::abs(p.mu_a) < 1.96 * *p.se.mu_a) {
        std::vector<DlmParams> s0 = {p};
        for (auto s : starts)
            s0.push_back(s);
        for (auto& s : s0)
            s.mu_a = 0.0;
        s0.resize(static_cast<std::size_t>(cfg.multistarts));
        auto reduced = best_of(in, gamma_hat, false, s0, cfg, out);
        if (!reduced)
            throw NumericalError("fit_mle: refit with mu_a = 0 did not converge");
        out.log.push_back("mu_a=" + format_number(p.mu_a) + " not significant, refitted with mu_a = 0");
        p = reduced->params;
        p.mu_dropped = true;
        p.se = standard_errors(p, in);
    }
    if (!p.se.sigma_z)
        out.log.push_back("Hessian not positive definite: standard errors unavailable");
    out.params = p;
    out.loglik = log_likelihood(p, in);
    out.converged = true;
    return out;
}

// ---------------------------------------------------------------------------
// Text records

namespace {

std::string opt(const std::optional<double>& v)
{
    return v ? format_number(*v) : "NA";
}

} // namespace

std::string fit_to_text(const MleResult& fit, const std::string& comment)
{
    const auto& p = fit.params;
    std::ostringstream os;
    if (!comment.empty())
        os << comment << '\n';
    os << "format=scarr-step2-fit\n";
    os << "sigma_z=" << format_number(p.sigma_z) << '\n';
    os << "sigma_a=" << format_number(p.sigma_a) << '\n';
    os << "psi_a=" << format_number(p.psi_a) << '\n';
    os << "mu_a=" << format_number(p.mu_a) << '\n';
    os << "beta_c=" << format_number(p.beta_c) << '\n';
    os << "gamma_hat=" << format_number(p.gamma_hat) << '\n';
    os << "se_sigma_z=" << opt(p.se.sigma_z) << '\n';
    os << "se_sigma_a=" << opt(p.se.sigma_a) << '\n';
    os << "se_psi_a=" << opt(p.se.psi_a) << '\n';
    os << "se_mu_a=" << opt(p.se.mu_a) << '\n';
    os << "se_beta_c=" << opt(p.se.beta_c) << '\n';
    os << "mu_dropped=" << (p.mu_dropped ? "true" : "false") << '\n';
    os << "loglik=" << format_number(fit.loglik) << '\n';
    os << "converged=" << (fit.converged ? "true" : "false") << '\n';
    os << "iterations=" << fit.iterations << '\n';
    os << "starts_converged=" << fit.starts_converged << '\n';
    return os.str();
}

MleResult fit_from_text(const std::string& text)
{
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("step2 fit: malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end())
            throw DataError("step2 fit: missing key '" + k + "'");
        return it->second;
    };
    auto num = [&](const std::string& k) {
        auto v = parse_double(get(k));
        if (!v)
            throw DataError("step2 fit: bad number for '" + k + "'");
        return *v;
    };
    auto optnum = [&](const std::string& k) -> std::optional<double> {
        if (get(k) == "NA")
            return std::nullopt;
        return num(k);
    };
    auto flag = [&](const std::string& k) {
        const auto& v = get(k);
        if (v != "true" && v != "false")
            throw DataError("step2 fit: bad flag for '" + k + "'");
        return v == "true";
    };
    auto integer = [&](const std::string& k) {
        auto v = parse_int(get(k));
        if (!v)
            throw DataError("step2 fit: bad integer for '" + k + "'");
        return static_cast<int>(*v);
    };
    if (get("format") != "scarr-step2-fit")
        throw DataError("step2 fit: unknown format");
    MleResult r;
    auto& p = r.params;
    p.sigma_z = num("sigma_z");
    p.sigma_a = num("sigma_a");
    p.psi_a = num("psi_a");
    p.mu_a = num("mu_a");
    p.beta_c = num("beta_c");
    p.gamma_hat = num("gamma_hat");
    p.se.sigma_z = optnum("se_sigma_z");
    p.se.sigma_a = optnum("se_sigma_a");
    p.se.psi_a = optnum("se_psi_a");
    p.se.mu_a = optnum("se_mu_a");
    p.se.beta_c = optnum("se_beta_c");
    p.mu_dropped = flag("mu_dropped");
    r.loglik = num("loglik");
    r.converged = flag("converged");
    r.iterations = integer("iterations");
    r.starts_converged = integer("starts_converged");
    try {
        p.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("step2 fit: ") + e.what());
    }
    return r;
}

std::string state_path_csv(const DlmInputs& in, const StateEstimate& est, const std::string& comment)
{
    std::ostringstream os;
    if (!comment.empty())
        os << comment << '\n';
    os << "day,filtered_mean,filtered_var,smoothed_mean,smoothed_var\n";
    const bool smoothed = est.smooth_mean.size() == est.filt_mean.size();
    for (int t = 0; t < in.T(); ++t) {
        os << in.days[t] << ',' << format_number(est.filt_mean[t]) << ',' << format_number(est.filt_var[t]) << ',';
        if (smoothed)
            os << format_number(est.smooth_mean[t]) << ',' << format_number(est.smooth_var[t]);
        else
            os << "NA,NA";
        os << '\n';
    }
    return os.str();
}

void apply_step2_option(Step2Config& cfg, const std::string& key, const std::string& value)
{
    auto positive = [&]() {
        auto v = parse_double(value);
        if (!v || !(*v > 0))
            throw ConfigError("step2." + key + ": expected a positive number, got '" + value + "'");
        return *v;
    };
    auto count = [&](int lo, int hi) {
        auto v = parse_int(value);
        if (!v || *v < lo || *v > hi)
            throw ConfigError("step2." + key + ": expected an integer in [" + std::to_string(lo) + "," +
                              std::to_string(hi) + "], got '" + value + "'");
        return static_cast<int>(*v);
    };
    if (key == "drop_mu_a") {
        if (value == "true" || value == "1" || value == "yes")
            cfg.drop_mu_a = true;
        else if (value == "false" || value == "0" || value == "no")
            cfg.drop_mu_a = false;
        else
            throw ConfigError("step2.drop_mu_a: expected true/false, got '" + value + "'");
    } else if (key == "multistarts")
        cfg.multistarts = count(1, 3);
    else if (key == "gradient_tol")
        cfg.gradient_tol = positive();
    else if (key == "step_tol")
        cfg.step_tol = positive();
    else if (key == "max_iter")
        cfg.max_iter = count(1, 100000);
    else if (key == "min_days_per_param")
        cfg.min_days_per_param = count(0, 1000);
    else
        throw ConfigError("unknown key step2." + key);
}

} // namespace scarr::step2
