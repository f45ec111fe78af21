#include "scarr/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace scarr {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x)
{
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

} // namespace

OptimResult nelder_mead_box(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, double initial_step, double ftol, int max_iter)
{
    const int n = static_cast<int>(x0.size());
    auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };

    std::vector<Eigen::VectorXd> pts(n + 1);
    std::vector<double> vals(n + 1);
    OptimResult res;
    pts[0] = project(x0);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd p = pts[0];
        p[i] += initial_step;
        if (p[i] > hi[i])
            p[i] = pts[0][i] - initial_step;
        pts[i + 1] = project(p);
    }
    for (int i = 0; i <= n; ++i)
        vals[i] = safe_eval(f, pts[i]);
    res.evaluations = n + 1;

    std::vector<int> order(n + 1);
    for (int it = 0; it < max_iter; ++it) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        const int best = order.front();
        const int worst = order.back();
        const int second = order[n - 1];
        res.iterations = it;
        double spread = 0;
        for (int i = 1; i <= n; ++i)
            spread = std::max(spread, (pts[order[i]] - pts[best]).cwiseAbs().maxCoeff());
        if (std::abs(vals[worst] - vals[best]) <= ftol * (1.0 + std::abs(vals[best])) && spread < 1e-8) {
            res.converged = true;
            break;
        }
        if (std::abs(vals[worst] - vals[best]) <= ftol * (1.0 + std::abs(vals[best])) && it > 50 * n) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
            centroid += pts[order[i]];
        centroid /= n;

        const Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]));
        const double fr = safe_eval(f, xr);
        ++res.evaluations;
        if (fr < vals[best]) {
            const Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[worst]));
            const double fe = safe_eval(f, xe);
            ++res.evaluations;
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Eigen::VectorXd xc = outside ? project(centroid + 0.5 * (xr - centroid))
                                           : project(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = safe_eval(f, xc);
        ++res.evaluations;
        if (fc < std::min(fr, vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        for (int i = 1; i <= n; ++i) {
            const int k = order[i];
            pts[k] = project(pts[best] + 0.5 * (pts[k] - pts[best]));
            vals[k] = safe_eval(f, pts[k]);
            ++res.evaluations;
        }
    }
    const int best = static_cast<int>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    res.x = pts[best];
    res.value = vals[best];
    return res;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double rel, Exec exec)
{
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    if (exec == Exec::parallel) {
#pragma omp parallel for
        for (int i = 0; i < n; ++i) {
            const double h = rel * std::max(1.0, std::abs(x[i]));
            Eigen::VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i]);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            const double h = rel * std::max(1.0, std::abs(x[i]));
            Eigen::VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i]);
        }
    }
    return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double rel)
{
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd H(n, n);
    Eigen::VectorXd h(n);
    for (int i = 0; i < n; ++i)
        h[i] = rel * std::max(1.0, std::abs(x[i]));
    const double f0 = f(x);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h[i];
        xm[i] -= h[i];
        H(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
        for (int j = 0; j < i; ++j) {
            Eigen::VectorXd a = x, b = x, c = x, d = x;
            a[i] += h[i]; a[j] += h[j];
            b[i] += h[i]; b[j] -= h[j];
            c[i] -= h[i]; c[j] += h[j];
            d[i] -= h[i]; d[j] -= h[j];
            H(i, j) = H(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4.0 * h[i] * h[j]);
        }
    }
    return H;
}

OptimResult bfgs(const Objective& f, Eigen::VectorXd x, const BfgsOptions& opts)
{
    const int n = static_cast<int>(x.size());
    OptimResult res;
    double fx = safe_eval(f, x);
    Eigen::VectorXd g = numeric_gradient(f, x, 1e-6, opts.exec);
    res.evaluations = 1 + 2 * n;
    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);

    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it + 1;
        if (g.cwiseAbs().maxCoeff() < opts.gradient_tol) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd dir = -Hinv * g;
        if (g.dot(dir) >= 0) { // not a descent direction: reset curvature
            Hinv.setIdentity();
            dir = -g;
        }
        double t = 1.0;
        const double slope = g.dot(dir);
        Eigen::VectorXd xn;
        double fn = 0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x + t * dir;
            fn = safe_eval(f, xn);
            ++res.evaluations;
            if (fn <= fx + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // line search exhausted: we are at the resolution of the
            // numeric gradient
            res.converged = g.cwiseAbs().maxCoeff() < 1e3 * opts.gradient_tol || (t * dir).cwiseAbs().maxCoeff() < opts.step_tol;
            break;
        }
        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd gn = numeric_gradient(f, xn, 1e-6, opts.exec);
        res.evaluations += 2 * n;
        const Eigen::VectorXd yv = gn - g;
        x = xn;
        fx = fn;
        g = gn;
        if (s.cwiseAbs().maxCoeff() < opts.step_tol) {
            res.converged = true;
            break;
        }
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            Hinv = (I - rho * s * yv.transpose()) * Hinv * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
        }
    }
    res.x = x;
    res.value = fx;
    return res;
}

} // namespace scarr
