#pragma once

#include <Eigen/Dense>

namespace warpfit {

struct QuadRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

// Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 2n-1.
QuadRule gauss_legendre(int n);

// Gauss-Hermite rule for weight exp(-x^2) on the real line.
QuadRule gauss_hermite(int n);

// Rescales a [-1,1] rule to [a, b].
QuadRule rescale(const QuadRule& rule, double a, double b);

}  // namespace warpfit
