#include "warpfit/quadrature.hpp"

#include <cmath>

#include "warpfit/common.hpp"

namespace warpfit {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the
// orthogonal-polynomial recurrence, weights come from the first components
// of the eigenvectors.
QuadRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
    const int n = static_cast<int>(offdiag.size()) + 1;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        jacobi(i, i + 1) = offdiag(i);
        jacobi(i + 1, i) = offdiag(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    QuadRule rule;
    rule.nodes = eig.eigenvalues();
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        const double v0 = eig.eigenvectors()(0, i);
        rule.weights(i) = mu0 * v0 * v0;
    }
    return rule;
}

}  // namespace

QuadRule gauss_legendre(int n) {
    if (n < 1) throw ConstraintError("gauss_legendre: order must be >= 1");
    if (n == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0)};
    Eigen::VectorXd off(n - 1);
    for (int i = 1; i < n; ++i) {
        off(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
    }
    return golub_welsch(off, 2.0);
}

QuadRule gauss_hermite(int n) {
    if (n < 1) throw ConstraintError("gauss_hermite: order must be >= 1");
    const double sqrt_pi = std::sqrt(M_PI);
    if (n == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, sqrt_pi)};
    Eigen::VectorXd off(n - 1);
    for (int i = 1; i < n; ++i) {
        off(i - 1) = std::sqrt(0.5 * i);
    }
    return golub_welsch(off, sqrt_pi);
}

QuadRule rescale(const QuadRule& rule, double a, double b) {
    QuadRule out;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    out.nodes = (rule.nodes.array() * half + mid).matrix();
    out.weights = rule.weights * half;
    return out;
}

}  // namespace warpfit
