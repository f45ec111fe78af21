#pragma once

#include <functional>

#include <Eigen/Dense>

#include "scarr/parallel.hpp"

namespace scarr {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead minimisation with every vertex projected onto [lo, hi].
OptimResult nelder_mead_box(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, double initial_step, double ftol = 1e-10,
                            int max_iter = 2000);

struct BfgsOptions {
    double gradient_tol = 1e-6; // max-norm of the gradient
    double step_tol = 1e-9;     // max-norm of the accepted step
    int max_iter = 500;
    Exec exec = Exec::serial; // gradient stencil evaluation
};

/// Central-difference gradient with step h_i = rel * max(1, |x_i|).
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double rel = 1e-5,
                                 Exec exec = Exec::serial);

/// Central-difference Hessian with step h_i = rel * max(1, |x_i|).
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double rel = 1e-4);

/// Quasi-Newton (BFGS) minimisation with numeric gradients and a
/// backtracking Armijo line search.
OptimResult bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts = {});

} // namespace scarr
