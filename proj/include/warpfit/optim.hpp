#pragma once

#include <functional>

#include <Eigen/Dense>

namespace warpfit {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

// Central finite-difference gradient with per-coordinate scaled steps.
Eigen::VectorXd fd_gradient(const ScalarFn& f, const Eigen::VectorXd& x, double step = 1e-6);

// Central finite-difference Hessian, symmetrized.
Eigen::MatrixXd fd_hessian(const ScalarFn& f, const Eigen::VectorXd& x, double step = 1e-4);

// Projects a symmetric matrix to PD by flooring its eigenvalues.
Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& sym, double floor);

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct MinimizeOptions {
    int max_iters = 200;
    double grad_tol = 1e-6;       // infinity norm of the FD gradient
    double fd_step = 1e-6;
    double step_tol = 1e-12;      // stop when the line search stalls
};

// BFGS with finite-difference gradients and Armijo backtracking. The
// objective may return +inf outside its domain; such trial points are
// rejected by the line search.
MinimizeResult minimize_bfgs(const ScalarFn& f, const Eigen::VectorXd& x0,
                             const MinimizeOptions& opts = {});

}  // namespace warpfit
