#pragma once

#include <vector>

#include <Eigen/Dense>

#include "warpfit/common.hpp"

namespace warpfit {

// Clamped B-spline basis {phi_1, ..., phi_q} on a closed interval.
// q = (#interior knots) + degree + 1. Basis values are nonnegative, have
// local support, and sum to one everywhere on the interval.
class BSplineBasis {
public:
    BSplineBasis() : BSplineBasis(0, Interval{0.0, 1.0}, {}) {}
    BSplineBasis(int degree, Interval interval, std::vector<double> interior_knots);

    // Cubic basis with n equispaced interior knots, the default setup.
    static BSplineBasis equispaced(int degree, Interval interval, int n_interior);

    int degree() const { return degree_; }
    int size() const { return q_; }
    const Interval& interval() const { return interval_; }
    const std::vector<double>& interior_knots() const { return interior_; }

    // Dense vector of all q basis values at t. At most degree+1 entries are
    // nonzero. t exactly at the right endpoint uses the left-limit span so
    // partition of unity holds on the closed interval.
    Eigen::VectorXd eval(double t) const;

    // Nonzero basis values at t: fills local[0..degree] for functions
    // first..first+degree. Used on hot paths to avoid the dense allocation.
    void eval_local(double t, int& first, double* local) const;

    // Gram matrix J[k,l] = \int phi_k phi_l dt, by per-span Gauss-Legendre
    // of order degree+1 (exact for the polynomial integrands).
    Eigen::MatrixXd gram() const;

private:
    int find_span(double t) const;

    int degree_;
    Interval interval_;
    std::vector<double> interior_;
    std::vector<double> knots_;  // clamped, size q + degree + 1
    int q_;
};

}  // namespace warpfit
