#include "warpfit/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "warpfit/quadrature.hpp"

namespace warpfit {

BSplineBasis::BSplineBasis(int degree, Interval interval, std::vector<double> interior_knots)
    : degree_(degree), interval_(interval), interior_(std::move(interior_knots)) {
    if (degree_ < 0 || degree_ > 30)
        throw ConstraintError("BSplineBasis: degree must be in [0, 30]");
    if (!(interval_.lo < interval_.hi))
        throw ConstraintError("BSplineBasis: interval must have positive length");
    double prev = interval_.lo;
    for (double k : interior_) {
        if (!(k > prev)) {
            std::ostringstream msg;
            msg << "BSplineBasis: interior knots must be strictly increasing inside the "
                   "interval; offending knot "
                << k;
            throw ConstraintError(msg.str());
        }
        prev = k;
    }
    if (!interior_.empty() && !(interior_.back() < interval_.hi))
        throw ConstraintError("BSplineBasis: interior knots must lie strictly below the right endpoint");

    q_ = static_cast<int>(interior_.size()) + degree_ + 1;
    knots_.reserve(q_ + degree_ + 1);
    for (int i = 0; i <= degree_; ++i) knots_.push_back(interval_.lo);
    knots_.insert(knots_.end(), interior_.begin(), interior_.end());
    for (int i = 0; i <= degree_; ++i) knots_.push_back(interval_.hi);
}

BSplineBasis BSplineBasis::equispaced(int degree, Interval interval, int n_interior) {
    std::vector<double> knots(n_interior);
    const double step = interval.length() / (n_interior + 1);
    for (int i = 0; i < n_interior; ++i) knots[i] = interval.lo + (i + 1) * step;
    return BSplineBasis(degree, interval, std::move(knots));
}

int BSplineBasis::find_span(double t) const {
    // Span index s with knots_[s] <= t < knots_[s+1]; the right endpoint
    // maps to the last non-empty span (left limit).
    const int last = q_ - 1;
    if (t >= knots_[q_]) return last;
    const int lo = degree_;
    auto it = std::upper_bound(knots_.begin() + lo, knots_.begin() + q_, t);
    int span = static_cast<int>(it - knots_.begin()) - 1;
    return std::clamp(span, lo, last);
}

void BSplineBasis::eval_local(double t, int& first, double* local) const {
    if (!interval_.contains(t)) {
        std::ostringstream msg;
        msg << "BSplineBasis::eval: t=" << t << " outside [" << interval_.lo << ", "
            << interval_.hi << "]";
        throw DomainError(msg.str());
    }
    const int span = find_span(t);
    first = span - degree_;

    // Cox-de Boor triangle (de Boor's algorithm, NURBS book A2.2).
    double left[32], right[32];
    local[0] = 1.0;
    for (int j = 1; j <= degree_; ++j) {
        left[j] = t - knots_[span + 1 - j];
        right[j] = knots_[span + j] - t;
        double saved = 0.0;
        for (int k = 0; k < j; ++k) {
            const double tmp = local[k] / (right[k + 1] + left[j - k]);
            local[k] = saved + right[k + 1] * tmp;
            saved = left[j - k] * tmp;
        }
        local[j] = saved;
    }
}

Eigen::VectorXd BSplineBasis::eval(double t) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(q_);
    int first = 0;
    double local[32];
    eval_local(t, first, local);
    for (int k = 0; k <= degree_; ++k) out(first + k) = local[k];
    return out;
}

Eigen::MatrixXd BSplineBasis::gram() const {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q_, q_);
    const QuadRule base = gauss_legendre(degree_ + 1);

    std::vector<double> breaks;
    breaks.push_back(interval_.lo);
    breaks.insert(breaks.end(), interior_.begin(), interior_.end());
    breaks.push_back(interval_.hi);

    double local[32];
    for (size_t s = 0; s + 1 < breaks.size(); ++s) {
        const QuadRule rule = rescale(base, breaks[s], breaks[s + 1]);
        for (int g = 0; g < rule.nodes.size(); ++g) {
            int first = 0;
            eval_local(rule.nodes(g), first, local);
            const double w = rule.weights(g);
            for (int k = 0; k <= degree_; ++k)
                for (int l = 0; l <= degree_; ++l)
                    J(first + k, first + l) += w * local[k] * local[l];
        }
    }
    return 0.5 * (J + J.transpose());
}

}  // namespace warpfit
