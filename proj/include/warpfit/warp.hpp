#pragma once

#include <Eigen/Dense>

#include "warpfit/common.hpp"

namespace warpfit {

// Unconstrained warp parameters (the Jupp image of a knot vector).
using ThetaVector = Eigen::VectorXd;

// Reference knots tau0 and subject knots tau, both strictly increasing and
// strictly inside the interval, same length r.
struct WarpKnots {
    Interval interval;
    Eigen::VectorXd tau0;
    Eigen::VectorXd tau;

    int r() const { return static_cast<int>(tau0.size()); }
    void validate() const;
};

// Monotone piecewise-cubic Hermite interpolant h with h(lo)=lo, h(hi)=hi and
// h(tau0_j)=tau_j. Slopes follow the Fritsch-Carlson rule, so h is
// nondecreasing for any strictly increasing knot vectors.
class MonotoneWarp {
public:
    MonotoneWarp(Eigen::VectorXd knots, Eigen::VectorXd values, Eigen::VectorXd slopes,
                 Interval interval);

    double operator()(double t) const;
    double deriv(double t) const;

    // Leftmost s in the interval with h(s) = t, |h(s) - t| < 1e-10.
    // Bracketed bisection refined by safeguarded Newton steps.
    double invert(double t) const;

    const Eigen::VectorXd& knots() const { return knots_; }
    const Eigen::VectorXd& values() const { return values_; }
    const Eigen::VectorXd& slopes() const { return slopes_; }
    const Interval& interval() const { return interval_; }

private:
    int segment(double t) const;

    Eigen::VectorXd knots_;   // augmented abscissae (lo, tau0, hi)
    Eigen::VectorXd values_;  // augmented ordinates (lo, tau, hi)
    Eigen::VectorXd slopes_;
    Interval interval_;
};

MonotoneWarp make_warp(const WarpKnots& knots);

// Identity warp on the interval with reference knots tau0.
MonotoneWarp identity_warp(const Eigen::VectorXd& tau0, Interval interval);

// Jupp transform: theta_j = log(gap_{j+1} / gap_j) over the r+1 gaps of the
// augmented vector (lo, tau, hi). Bijection between strictly increasing
// interior knot vectors and R^r.
ThetaVector jupp_forward(const Eigen::VectorXd& tau, Interval interval);

// Inverse: gaps proportional to cumulative exponentials of theta, normalized
// to fill the interval.
Eigen::VectorXd jupp_inverse(const ThetaVector& theta, Interval interval);

// Warp with knots jupp_inverse(theta) against the reference tau0; this is the
// parametric family g(., theta) used by the random-effects model.
MonotoneWarp warp_from_theta(const ThetaVector& theta, const Eigen::VectorXd& tau0,
                             Interval interval);

}  // namespace warpfit
