#include "warpfit/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace warpfit {

namespace {

void check_increasing_inside(const Eigen::VectorXd& v, const Interval& iv, const char* name) {
    double prev = iv.lo;
    for (int i = 0; i < v.size(); ++i) {
        if (!(v(i) > prev)) {
            std::ostringstream msg;
            msg << name << " must be strictly increasing inside (" << iv.lo << ", " << iv.hi
                << "); offending entry " << i + 1 << " = " << v(i);
            throw ConstraintError(msg.str());
        }
        prev = v(i);
    }
    if (v.size() > 0 && !(v(v.size() - 1) < iv.hi)) {
        std::ostringstream msg;
        msg << name << " must lie strictly below the right endpoint " << iv.hi;
        throw ConstraintError(msg.str());
    }
}

}  // namespace

void WarpKnots::validate() const {
    if (tau0.size() != tau.size())
        throw ConstraintError("WarpKnots: tau0 and tau must have the same length");
    check_increasing_inside(tau0, interval, "WarpKnots: tau0");
    check_increasing_inside(tau, interval, "WarpKnots: tau");
}

MonotoneWarp::MonotoneWarp(Eigen::VectorXd knots, Eigen::VectorXd values, Eigen::VectorXd slopes,
                           Interval interval)
    : knots_(std::move(knots)),
      values_(std::move(values)),
      slopes_(std::move(slopes)),
      interval_(interval) {}

int MonotoneWarp::segment(double t) const {
    const int n = static_cast<int>(knots_.size());
    // Segment j with knots_(j) <= t < knots_(j+1); right endpoint uses the
    // last segment.
    int lo = 0, hi = n - 2;
    if (t >= knots_(n - 1)) return n - 2;
    while (lo < hi) {
        const int mid = (lo + hi + 1) / 2;
        if (knots_(mid) <= t)
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

double MonotoneWarp::operator()(double t) const {
    if (!interval_.contains(t)) {
        std::ostringstream msg;
        msg << "MonotoneWarp: t=" << t << " outside [" << interval_.lo << ", " << interval_.hi
            << "]";
        throw DomainError(msg.str());
    }
    const int j = segment(t);
    const double len = knots_(j + 1) - knots_(j);
    const double s = (t - knots_(j)) / len;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return values_(j) * h00 + len * slopes_(j) * h10 + values_(j + 1) * h01 +
           len * slopes_(j + 1) * h11;
}

double MonotoneWarp::deriv(double t) const {
    if (!interval_.contains(t)) {
        std::ostringstream msg;
        msg << "MonotoneWarp::deriv: t=" << t << " outside [" << interval_.lo << ", "
            << interval_.hi << "]";
        throw DomainError(msg.str());
    }
    const int j = segment(t);
    const double len = knots_(j + 1) - knots_(j);
    const double s = (t - knots_(j)) / len;
    const double s2 = s * s;
    const double dh00 = 6.0 * s2 - 6.0 * s;
    const double dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    const double dh01 = -6.0 * s2 + 6.0 * s;
    const double dh11 = 3.0 * s2 - 2.0 * s;
    return (values_(j) * dh00 + values_(j + 1) * dh01) / len + slopes_(j) * dh10 +
           slopes_(j + 1) * dh11;
}

double MonotoneWarp::invert(double t) const {
    if (!interval_.contains(t)) {
        std::ostringstream msg;
        msg << "MonotoneWarp::invert: t=" << t << " outside [" << interval_.lo << ", "
            << interval_.hi << "]";
        throw DomainError(msg.str());
    }
    // Bisection on the predicate h(s) >= t converges to the leftmost preimage.
    double lo = interval_.lo;
    double hi = interval_.hi;
    for (int it = 0; it < 40 && hi - lo > 1e-8; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((*this)(mid) >= t)
            hi = mid;
        else
            lo = mid;
    }
    // Newton polish from the right bracket end, safeguarded by the bracket.
    double s = hi;
    double fs = (*this)(s)-t;
    double best = s;
    double best_err = std::abs(fs);
    for (int it = 0; it < 60 && best_err > 1e-13; ++it) {
        const double ds = deriv(s);
        double next;
        if (ds > 1e-12) {
            next = s - fs / ds;
            if (next < lo || next > hi) next = 0.5 * (lo + hi);
        } else {
            next = 0.5 * (lo + hi);
        }
        const double fn = (*this)(next)-t;
        if (fn >= 0.0)
            hi = next;
        else
            lo = next;
        s = next;
        fs = fn;
        if (std::abs(fn) < best_err) {
            best = next;
            best_err = std::abs(fn);
        }
        if (hi - lo <= std::numeric_limits<double>::epsilon() * interval_.length()) break;
    }
    return std::clamp(best, interval_.lo, interval_.hi);
}

MonotoneWarp make_warp(const WarpKnots& knots) {
    knots.validate();
    const int r = knots.r();
    const int n = r + 2;

    Eigen::VectorXd x(n), y(n);
    x(0) = knots.interval.lo;
    y(0) = knots.interval.lo;
    x.segment(1, r) = knots.tau0;
    y.segment(1, r) = knots.tau;
    x(n - 1) = knots.interval.hi;
    y(n - 1) = knots.interval.hi;

    Eigen::VectorXd secant(n - 1);
    for (int j = 0; j + 1 < n; ++j) secant(j) = (y(j + 1) - y(j)) / (x(j + 1) - x(j));

    // Fritsch-Carlson slopes: secant means, zeroed at sign changes, then
    // projected onto the disk alpha^2 + beta^2 <= 9 of the monotone region.
    Eigen::VectorXd d(n);
    d(0) = secant(0);
    d(n - 1) = secant(n - 2);
    for (int j = 1; j + 1 < n; ++j) {
        if (secant(j - 1) * secant(j) <= 0.0)
            d(j) = 0.0;
        else
            d(j) = 0.5 * (secant(j - 1) + secant(j));
    }
    for (int j = 0; j + 1 < n; ++j) {
        if (secant(j) == 0.0) {
            d(j) = 0.0;
            d(j + 1) = 0.0;
            continue;
        }
        const double alpha = d(j) / secant(j);
        const double beta = d(j + 1) / secant(j);
        const double rad2 = alpha * alpha + beta * beta;
        if (rad2 > 9.0) {
            const double scale = 3.0 / std::sqrt(rad2);
            d(j) = scale * alpha * secant(j);
            d(j + 1) = scale * beta * secant(j);
        }
    }

    return MonotoneWarp(std::move(x), std::move(y), std::move(d), knots.interval);
}

MonotoneWarp identity_warp(const Eigen::VectorXd& tau0, Interval interval) {
    return make_warp(WarpKnots{interval, tau0, tau0});
}

ThetaVector jupp_forward(const Eigen::VectorXd& tau, Interval interval) {
    check_increasing_inside(tau, interval, "jupp_forward: tau");
    const int r = static_cast<int>(tau.size());
    Eigen::VectorXd gaps(r + 1);
    double prev = interval.lo;
    for (int j = 0; j < r; ++j) {
        gaps(j) = tau(j) - prev;
        prev = tau(j);
    }
    gaps(r) = interval.hi - prev;
    ThetaVector theta(r);
    for (int j = 0; j < r; ++j) theta(j) = std::log(gaps(j + 1) / gaps(j));
    return theta;
}

Eigen::VectorXd jupp_inverse(const ThetaVector& theta, Interval interval) {
    const int r = static_cast<int>(theta.size());
    for (int j = 0; j < r; ++j) {
        if (!std::isfinite(theta(j)))
            throw ConstraintError("jupp_inverse: theta must be finite");
    }
    // Log gaps up to an additive constant; normalize in log space so large
    // theta cannot overflow.
    Eigen::VectorXd log_gap(r + 1);
    log_gap(0) = 0.0;
    for (int j = 0; j < r; ++j) log_gap(j + 1) = log_gap(j) + theta(j);
    const double top = log_gap.maxCoeff();
    double denom = 0.0;
    for (int j = 0; j <= r; ++j) denom += std::exp(log_gap(j) - top);
    const double log_norm = top + std::log(denom);

    Eigen::VectorXd tau(r);
    double acc = interval.lo;
    const double len = interval.length();
    for (int j = 0; j < r; ++j) {
        acc += len * std::exp(log_gap(j) - log_norm);
        tau(j) = acc;
    }
    return tau;
}

MonotoneWarp warp_from_theta(const ThetaVector& theta, const Eigen::VectorXd& tau0,
                             Interval interval) {
    return make_warp(WarpKnots{interval, tau0, jupp_inverse(theta, interval)});
}

}  // namespace warpfit
