#include "warpfit/optim.hpp"

#include <cmath>
#include <limits>

namespace warpfit {

Eigen::VectorXd fd_gradient(const ScalarFn& f, const Eigen::VectorXd& x, double step) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    Eigen::VectorXd xp = x, xm = x;
    for (int i = 0; i < n; ++i) {
        const double h = step * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + h;
        xm(i) = x(i) - h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
        xp(i) = x(i);
        xm(i) = x(i);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const ScalarFn& f, const Eigen::VectorXd& x, double step) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd hess(n, n);
    const double f0 = f(x);
    Eigen::VectorXd h(n);
    for (int i = 0; i < n; ++i) h(i) = step * (1.0 + std::abs(x(i)));

    Eigen::VectorXd xt = x;
    for (int i = 0; i < n; ++i) {
        xt(i) = x(i) + h(i);
        const double fp = f(xt);
        xt(i) = x(i) - h(i);
        const double fm = f(xt);
        xt(i) = x(i);
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            xt(i) = x(i) + h(i);
            xt(j) = x(j) + h(j);
            const double fpp = f(xt);
            xt(j) = x(j) - h(j);
            const double fpm = f(xt);
            xt(i) = x(i) - h(i);
            const double fmm = f(xt);
            xt(j) = x(j) + h(j);
            const double fmp = f(xt);
            xt(i) = x(i);
            xt(j) = x(j);
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
        }
    }
    return 0.5 * (hess + hess.transpose());
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& sym, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    Eigen::VectorXd vals = eig.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) vals(i) = std::max(vals(i), floor);
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

MinimizeResult minimize_bfgs(const ScalarFn& f, const Eigen::VectorXd& x0,
                             const MinimizeOptions& opts) {
    const int n = static_cast<int>(x0.size());
    MinimizeResult res;
    res.x = x0;
    res.value = f(x0);
    if (!std::isfinite(res.value)) {
        res.converged = false;
        res.grad_norm = std::numeric_limits<double>::infinity();
        return res;
    }

    Eigen::MatrixXd inv_hess = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd grad = fd_gradient(f, res.x, opts.fd_step);

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        res.iterations = iter;
        res.grad_norm = grad.lpNorm<Eigen::Infinity>();
        if (res.grad_norm < opts.grad_tol) {
            res.converged = true;
            return res;
        }

        Eigen::VectorXd dir = -(inv_hess * grad);
        double slope = grad.dot(dir);
        if (slope >= 0.0) {  // reset a corrupted curvature estimate
            inv_hess.setIdentity();
            dir = -grad;
            slope = grad.dot(dir);
        }

        // Armijo backtracking
        double alpha = 1.0;
        double fnew = std::numeric_limits<double>::infinity();
        Eigen::VectorXd xnew;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xnew = res.x + alpha * dir;
            fnew = f(xnew);
            if (std::isfinite(fnew) && fnew <= res.value + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted || alpha * dir.norm() < opts.step_tol) {
            res.converged = res.grad_norm < 10.0 * opts.grad_tol;
            return res;
        }

        const Eigen::VectorXd grad_new = fd_gradient(f, xnew, opts.fd_step);
        const Eigen::VectorXd s = xnew - res.x;
        const Eigen::VectorXd ydiff = grad_new - grad;
        const double sy = s.dot(ydiff);
        if (sy > 1e-12 * s.norm() * ydiff.norm()) {
            // BFGS inverse update
            const Eigen::VectorXd hy = inv_hess * ydiff;
            const double yhy = ydiff.dot(hy);
            inv_hess += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                        (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        res.x = xnew;
        res.value = fnew;
        grad = grad_new;
    }
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    res.converged = res.grad_norm < opts.grad_tol;
    return res;
}

}  // namespace warpfit
