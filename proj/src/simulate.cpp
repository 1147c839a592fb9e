#include "warpfit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "warpfit/rng.hpp"

namespace warpfit {

void SimSpec::validate() const {
    if (n < 1) throw ConstraintError("SimSpec: n must be >= 1");
    if (m < 2) throw ConstraintError("SimSpec: m must be >= 2");
    if (!(min_span > 0.0 && min_span <= 1.0))
        throw ConstraintError("SimSpec: min_span must be in (0, 1]");
    if (!(model.sigma2 >= 0.0)) throw ConstraintError("SimSpec: sigma2 must be >= 0");
    for (int k = 0; k < model.p(); ++k)
        if (!(model.lambda(k) >= 0.0)) throw ConstraintError("SimSpec: lambda must be >= 0");
    if (label_b.size() != model.p())
        throw ConstraintError("SimSpec: label_b must have length p");
    if (label_d.size() != 0 && label_d.size() != model.r())
        throw ConstraintError("SimSpec: label_d must be empty or have length r");
    if (model.a.size() != model.q()) throw ConstraintError("SimSpec: model.a must have length q");
    if (model.C.rows() != model.q() || model.C.cols() != model.p())
        throw ConstraintError("SimSpec: model.C must be q x p");
}

std::pair<Dataset, SimTruth> simulate(const SimSpec& spec) {
    spec.validate();
    const TemplateModel& model = spec.model;
    const Interval iv = model.basis.interval();
    const int r = model.r();
    const int p = model.p();
    Rng rng(spec.seed);

    // Sigma^(1/2) via the eigendecomposition (valid for any PSD Sigma)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sig_eig(model.Sigma);
    Eigen::VectorXd sig_vals = sig_eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sigma_half =
        sig_eig.eigenvectors() * sig_vals.asDiagonal() * sig_eig.eigenvectors().transpose();

    const int id_width = std::max(3, static_cast<int>(std::to_string(spec.n).size()));
    const double noise_sd = std::sqrt(spec.model.sigma2);

    Dataset data;
    data.meta.seed = spec.seed;
    data.meta.sources.push_back("simulate");
    SimTruth truth;

    for (int i = 0; i < spec.n; ++i) {
        SimTruth::Subject subj;
        std::ostringstream id;
        id << "s";
        const std::string num = std::to_string(i + 1);
        for (int k = static_cast<int>(num.size()); k < id_width; ++k) id << '0';
        id << num;
        subj.id = id.str();

        Eigen::VectorXd eps(r);
        for (int k = 0; k < r; ++k) eps(k) = rng.normal();
        subj.theta = model.theta0 + sigma_half * eps;
        subj.tau = jupp_inverse(subj.theta, iv);

        subj.z.resize(p);
        for (int k = 0; k < p; ++k) subj.z(k) = std::sqrt(model.lambda(k)) * rng.normal();

        Curve curve;
        curve.id = subj.id;
        curve.t.resize(spec.m);
        if (spec.grid_policy == SimSpec::GridPolicy::common_equispaced) {
            for (int j = 0; j < spec.m; ++j)
                curve.t(j) = iv.lo + iv.length() * j / (spec.m - 1);
        } else {
            const double right = rng.uniform(iv.lo + spec.min_span * iv.length(), iv.hi);
            std::vector<double> pts(spec.m);
            pts.front() = iv.lo;
            pts.back() = right;
            for (int j = 1; j + 1 < spec.m; ++j) pts[j] = rng.uniform(iv.lo, right);
            std::sort(pts.begin(), pts.end());
            // collapse accidental ties
            for (int j = 1; j < spec.m; ++j)
                if (pts[j] <= pts[j - 1]) pts[j] = std::nextafter(pts[j - 1], iv.hi);
            for (int j = 0; j < spec.m; ++j) curve.t(j) = pts[j];
        }

        const MonotoneWarp warp = make_warp(WarpKnots{iv, model.tau0, subj.tau});
        const Eigen::VectorXd coef = model.a + model.C * subj.z;
        curve.y.resize(spec.m);
        for (int j = 0; j < spec.m; ++j) {
            const double s = warp.invert(curve.t(j));
            curve.y(j) = model.basis.eval(s).dot(coef) + noise_sd * rng.normal();
        }

        double eta = spec.label_alpha + spec.label_b.dot(subj.z);
        if (spec.label_d.size() == r) eta += spec.label_d.dot(subj.tau);
        subj.prob = 1.0 / (1.0 + std::exp(-eta));
        subj.label = rng.bernoulli(subj.prob) ? 1 : 0;
        data.labels[subj.id] = subj.label;

        data.curves.push_back(std::move(curve));
        truth.subjects.push_back(std::move(subj));
    }
    data.validate();
    return {std::move(data), std::move(truth)};
}

}  // namespace warpfit
