#include "warpfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "warpfit/optim.hpp"
#include "warpfit/quadrature.hpp"

namespace warpfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double logsumexp(const std::vector<double>& v) {
    double top = kNegInf;
    for (double x : v) top = std::max(top, x);
    if (top == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - top);
    return top + std::log(s);
}

// log N(theta; theta0, Sigma) for PD Sigma; near-singular Sigma gets a tiny
// jitter so a collapsing EM iterate cannot abort the whole fit.
double theta_prior_loglik(const ThetaVector& theta, const TemplateModel& model) {
    const int r = model.r();
    Eigen::LLT<Eigen::MatrixXd> llt(model.Sigma);
    if (llt.info() != Eigen::Success) {
        Eigen::MatrixXd jittered = model.Sigma;
        jittered.diagonal().array() +=
            1e-10 * std::max(model.Sigma.trace() / std::max(r, 1), 1e-10);
        llt.compute(jittered);
        if (llt.info() != Eigen::Success)
            throw ParameterError("theta prior: Sigma is not positive semidefinite");
    }
    const Eigen::VectorXd w = llt.matrixL().solve(theta - model.theta0);
    double logdet = 0.0;
    for (int i = 0; i < r; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * r * kLog2Pi - 0.5 * logdet - 0.5 * w.squaredNorm();
}

bool sigma_is_degenerate(const Eigen::MatrixXd& Sigma) {
    if (Sigma.size() == 0) return true;
    return Sigma.cwiseAbs().maxCoeff() < 1e-12;
}

}  // namespace

void TemplateModel::validate() const {
    const int qn = q();
    if (a.size() != qn) throw ConstraintError("TemplateModel: a must have length q");
    if (C.rows() != qn || C.cols() != p())
        throw ConstraintError("TemplateModel: C must be q x p");
    for (int k = 0; k < p(); ++k) {
        if (!(lambda(k) > 0.0)) throw ParameterError("TemplateModel: lambda must be positive");
        if (k > 0 && lambda(k) > lambda(k - 1) + 1e-12)
            throw ConstraintError("TemplateModel: lambda must be nonincreasing");
    }
    if (!(sigma2 > 0.0)) throw ParameterError("TemplateModel: sigma2 must be positive");
    if (gram.rows() != qn || gram.cols() != qn)
        throw ConstraintError("TemplateModel: gram cache has wrong shape");
    if (p() > 0) {
        const Eigen::MatrixXd ortho = C.transpose() * gram * C;
        if ((ortho - Eigen::MatrixXd::Identity(p(), p())).cwiseAbs().maxCoeff() > 1e-8)
            throw ConstraintError("TemplateModel: C'JC must be the identity");
        for (int k = 0; k < p(); ++k) {
            int arg = 0;
            C.col(k).cwiseAbs().maxCoeff(&arg);
            if (C(arg, k) < 0.0)
                throw ConstraintError(
                    "TemplateModel: sign convention violated (largest coefficient of component " +
                    std::to_string(k + 1) + " is negative)");
        }
    }
    if (Sigma.rows() != r() || Sigma.cols() != r())
        throw ConstraintError("TemplateModel: Sigma must be r x r");
    if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw ConstraintError("TemplateModel: Sigma must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Sigma);
    if (Sigma.size() > 0 && eig.eigenvalues().minCoeff() < -1e-10)
        throw ConstraintError("TemplateModel: Sigma must be positive semidefinite");
    const ThetaVector expected_theta0 = jupp_forward(tau0, basis.interval());
    if ((theta0 - expected_theta0).lpNorm<Eigen::Infinity>() > 1e-10)
        throw ConstraintError("TemplateModel: theta0 must be the Jupp transform of tau0");
}

void FitConfig::validate() const {
    if (p < 0) throw ConstraintError("FitConfig: p must be >= 0");
    if (max_em_iters < 1) throw ConstraintError("FitConfig: max_em_iters must be >= 1");
    if (!(em_tol > 0.0)) throw ConstraintError("FitConfig: em_tol must be positive");
    if (quad_points_per_dim < 1)
        throw ConstraintError("FitConfig: quad_points_per_dim must be >= 1");
    if (ridge < 0.0) throw ConstraintError("FitConfig: ridge must be nonnegative");
}

SuffStats::SuffStats(int q, int p, int r) {
    bw_lhs = Eigen::MatrixXd::Zero(q * (1 + p), q * (1 + p));
    bw_rhs = Eigen::MatrixXd::Zero(q, 1 + p);
    theta_outer = Eigen::MatrixXd::Zero(r, r);
    z_second = Eigen::MatrixXd::Zero(p, p);
}

SuffStats& SuffStats::operator+=(const SuffStats& other) {
    bw_lhs += other.bw_lhs;
    bw_rhs += other.bw_rhs;
    yty += other.yty;
    theta_outer += other.theta_outer;
    z_second += other.z_second;
    m_total += other.m_total;
    n_subjects += other.n_subjects;
    loglik += other.loglik;
    n_flagged += other.n_flagged;
    return *this;
}

Eigen::MatrixXd design_matrix(const Curve& curve, const ThetaVector& theta,
                              const TemplateModel& model) {
    const MonotoneWarp warp = warp_from_theta(theta, model.tau0, model.basis.interval());
    const int m = curve.m();
    Eigen::MatrixXd phi(m, model.q());
    double local[32];
    for (int j = 0; j < m; ++j) {
        const double s = warp.invert(curve.t(j));
        int first = 0;
        model.basis.eval_local(s, first, local);
        phi.row(j).setZero();
        for (int k = 0; k <= model.basis.degree(); ++k) phi(j, first + k) = local[k];
    }
    return phi;
}

double conditional_loglik_with_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& phi,
                                      const TemplateModel& model) {
    if (!(model.sigma2 > 0.0))
        throw ParameterError("conditional_loglik: sigma2 must be positive");
    const int m = static_cast<int>(y.size());
    const int p = model.p();
    const Eigen::VectorXd resid = y - phi * model.a;
    const double log_s2 = std::log(model.sigma2);

    if (p == 0) {
        return -0.5 * m * (kLog2Pi + log_s2) - 0.5 * resid.squaredNorm() / model.sigma2;
    }
    for (int k = 0; k < p; ++k)
        if (!(model.lambda(k) > 0.0))
            throw ParameterError("conditional_loglik: lambda must be positive");

    // Woodbury on sigma2 I + U Lambda U' with U = Phi C.
    const Eigen::MatrixXd U = phi * model.C;
    Eigen::MatrixXd G = U.transpose() * U / model.sigma2;
    G += model.lambda.cwiseInverse().asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
        throw ParameterError("conditional_loglik: inner system not positive definite");
    const Eigen::VectorXd ur = U.transpose() * resid;
    const Eigen::VectorXd w = llt.matrixL().solve(ur);
    const double quad =
        resid.squaredNorm() / model.sigma2 - w.squaredNorm() / (model.sigma2 * model.sigma2);
    double logdet = m * log_s2 + model.lambda.array().log().sum();
    for (int k = 0; k < p; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    return -0.5 * m * kLog2Pi - 0.5 * logdet - 0.5 * quad;
}

double conditional_loglik(const Curve& curve, const ThetaVector& theta,
                          const TemplateModel& model) {
    return conditional_loglik_with_design(curve.y, design_matrix(curve, theta, model), model);
}

double theta_objective(const Curve& curve, const ThetaVector& theta, const TemplateModel& model) {
    try {
        return conditional_loglik(curve, theta, model) + theta_prior_loglik(theta, model);
    } catch (const ConstraintError&) {
        // warp degenerated under an extreme theta trial point
        return kNegInf;
    }
}

ThetaMap posterior_theta_map(const Curve& curve, const TemplateModel& model) {
    const int r = model.r();
    const ScalarFn neg = [&](const Eigen::VectorXd& th) {
        return -theta_objective(curve, th, model);
    };

    MinimizeOptions opts;
    opts.grad_tol = 1e-6;
    MinimizeResult best = minimize_bfgs(neg, model.theta0, opts);

    if (!(best.converged && best.grad_norm <= 1e-6)) {
        for (int k = 0; k < 2 * r; ++k) {
            Eigen::VectorXd start = model.theta0;
            start(k / 2) += (k % 2 == 0) ? 0.5 : -0.5;
            const MinimizeResult alt = minimize_bfgs(neg, start, opts);
            const bool better = (alt.converged && !best.converged) ||
                                (alt.converged == best.converged && alt.value < best.value);
            if (better) best = alt;
        }
    }

    ThetaMap out;
    out.theta = best.x;
    out.converged = best.converged && std::isfinite(best.value);
    out.hessian = floor_eigenvalues(fd_hessian(neg, best.x), 1e-8);
    return out;
}

namespace {

struct NodeSet {
    std::vector<ThetaVector> theta;   // node locations
    std::vector<double> log_omega;    // log quadrature weights (integral form)
};

// Tensor adaptive-GH nodes centered at the MAP, scaled by the inverse
// Cholesky factor of the Hessian.
NodeSet build_nodes(const ThetaVector& center, const Eigen::MatrixXd& hessian, int points_per_dim) {
    const int r = static_cast<int>(center.size());
    NodeSet out;
    const QuadRule gh = gauss_hermite(points_per_dim);
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    const Eigen::MatrixXd l_inv_t =
        llt.matrixL().toDenseMatrix().triangularView<Eigen::Lower>().solve(
            Eigen::MatrixXd::Identity(r, r)).transpose();
    double log_det_a = 0.0;
    for (int i = 0; i < r; ++i) log_det_a -= std::log(llt.matrixL()(i, i));

    const int total = static_cast<int>(std::pow(points_per_dim, r));
    out.theta.reserve(total);
    out.log_omega.reserve(total);
    std::vector<int> idx(r, 0);
    for (int flat = 0; flat < total; ++flat) {
        Eigen::VectorXd u(r);
        double log_w = 0.0;
        for (int d = 0; d < r; ++d) {
            u(d) = gh.nodes(idx[d]);
            log_w += std::log(gh.weights(idx[d]));
        }
        out.theta.push_back(center + std::sqrt(2.0) * (l_inv_t * u));
        out.log_omega.push_back(0.5 * r * std::log(2.0) + log_det_a + log_w + u.squaredNorm());
        for (int d = 0; d < r; ++d) {
            if (++idx[d] < points_per_dim) break;
            idx[d] = 0;
        }
    }
    return out;
}

}  // namespace

EStepResult e_step(const Curve& curve, const TemplateModel& model, const FitConfig& config) {
    config.validate();
    const int q = model.q();
    const int p = model.p();
    const int r = model.r();

    EStepResult out;
    out.stats = SuffStats(q, p, r);
    out.effects.id = curve.id;

    NodeSet nodes;
    bool flagged = false;
    if (sigma_is_degenerate(model.Sigma)) {
        // degenerate prior: theta pinned at theta0, no integration
        nodes.theta.push_back(model.theta0);
        nodes.log_omega.push_back(0.0);
    } else {
        ThetaVector center = model.theta0;
        Eigen::MatrixXd hessian;
        const ThetaMap map = posterior_theta_map(curve, model);
        if (map.converged) {
            center = map.theta;
            hessian = map.hessian;
        } else {
            flagged = true;  // fall back to a single node at theta0
            hessian = floor_eigenvalues(
                fd_hessian([&](const Eigen::VectorXd& th) { return -theta_objective(curve, th, model); },
                           center),
                1e-8);
        }
        const int points = (config.estep_mode == FitConfig::EStepMode::map_hard || flagged)
                               ? 1
                               : config.quad_points_per_dim;
        nodes = build_nodes(center, hessian, points);
    }

    const int n_nodes = static_cast<int>(nodes.theta.size());
    const bool degenerate = sigma_is_degenerate(model.Sigma);

    // per-node conditional pieces
    std::vector<double> log_joint(n_nodes, kNegInf);
    std::vector<Eigen::MatrixXd> phis(n_nodes);
    std::vector<Eigen::VectorXd> z_mean(n_nodes);
    std::vector<Eigen::MatrixXd> z_cov(n_nodes);
    const Eigen::MatrixXd lambda_inv =
        p > 0 ? Eigen::MatrixXd(model.lambda.cwiseInverse().asDiagonal()) : Eigen::MatrixXd(0, 0);

    for (int k = 0; k < n_nodes; ++k) {
        double cond;
        try {
            phis[k] = design_matrix(curve, nodes.theta[k], model);
            cond = conditional_loglik_with_design(curve.y, phis[k], model);
        } catch (const ConstraintError&) {
            continue;  // degenerate node stays at -inf and drops out
        }
        const double prior = degenerate ? 0.0 : theta_prior_loglik(nodes.theta[k], model);
        log_joint[k] = nodes.log_omega[k] + cond + prior;

        if (p > 0) {
            const Eigen::MatrixXd U = phis[k] * model.C;
            Eigen::MatrixXd prec = U.transpose() * U / model.sigma2 + lambda_inv;
            z_cov[k] = prec.llt().solve(Eigen::MatrixXd::Identity(p, p));
            z_mean[k] = z_cov[k] * (U.transpose() * (curve.y - phis[k] * model.a)) / model.sigma2;
        } else {
            z_mean[k] = Eigen::VectorXd(0);
            z_cov[k] = Eigen::MatrixXd(0, 0);
        }
    }

    const double log_z = logsumexp(log_joint);
    if (!std::isfinite(log_z)) {
        std::ostringstream msg;
        msg << "e_step: subject " << curve.id << " has no usable quadrature node";
        throw FitError(msg.str());
    }
    std::vector<double> post(n_nodes);
    for (int k = 0; k < n_nodes; ++k) post[k] = std::exp(log_joint[k] - log_z);

    // posterior means
    Eigen::VectorXd theta_hat = Eigen::VectorXd::Zero(r);
    Eigen::VectorXd z_hat = Eigen::VectorXd::Zero(p);
    for (int k = 0; k < n_nodes; ++k) {
        if (post[k] == 0.0) continue;
        theta_hat += post[k] * nodes.theta[k];
        if (p > 0) z_hat += post[k] * z_mean[k];
    }

    // centered second moments and sufficient statistics
    Eigen::MatrixXd theta_cov = Eigen::MatrixXd::Zero(r, r);
    Eigen::MatrixXd z_cov_post = Eigen::MatrixXd::Zero(p, p);
    SuffStats& stats = out.stats;
    for (int k = 0; k < n_nodes; ++k) {
        if (post[k] == 0.0) continue;
        const Eigen::VectorXd dtheta = nodes.theta[k] - theta_hat;
        theta_cov += post[k] * dtheta * dtheta.transpose();
        const Eigen::VectorXd d0 = nodes.theta[k] - model.theta0;
        stats.theta_outer += post[k] * d0 * d0.transpose();

        const Eigen::MatrixXd ptp = phis[k].transpose() * phis[k];
        const Eigen::VectorXd pty = phis[k].transpose() * curve.y;

        // W = E[w w' | node],  w = (1, z')'
        Eigen::MatrixXd w_mat(1 + p, 1 + p);
        w_mat(0, 0) = 1.0;
        if (p > 0) {
            const Eigen::MatrixXd zz = z_cov[k] + z_mean[k] * z_mean[k].transpose();
            w_mat.block(0, 1, 1, p) = z_mean[k].transpose();
            w_mat.block(1, 0, p, 1) = z_mean[k];
            w_mat.block(1, 1, p, p) = zz;
            stats.z_second += post[k] * zz;
            const Eigen::VectorXd dz = z_mean[k] - z_hat;
            z_cov_post += post[k] * (z_cov[k] + dz * dz.transpose());
        }
        for (int alpha = 0; alpha <= p; ++alpha)
            for (int beta = 0; beta <= p; ++beta)
                stats.bw_lhs.block(alpha * q, beta * q, q, q) += post[k] * w_mat(alpha, beta) * ptp;
        stats.bw_rhs.col(0) += post[k] * pty;
        for (int j = 0; j < p; ++j) stats.bw_rhs.col(1 + j) += post[k] * z_mean[k](j) * pty;
    }
    stats.yty = curve.y.squaredNorm();
    stats.m_total = curve.m();
    stats.n_subjects = 1;
    stats.loglik = log_z;
    stats.n_flagged = flagged ? 1 : 0;

    SubjectEffects& eff = out.effects;
    eff.theta_hat = theta_hat;
    eff.theta_cov = 0.5 * (theta_cov + theta_cov.transpose());
    eff.tau_hat = jupp_inverse(theta_hat, model.basis.interval());
    eff.z_hat = z_hat;
    eff.z_cov = 0.5 * (z_cov_post + z_cov_post.transpose());
    eff.loglik_contrib = log_z;
    eff.flagged = flagged;
    return out;
}

double marginal_loglik(const Dataset& data, const TemplateModel& model, const FitConfig& config) {
    double total = 0.0;
    for (const auto& curve : data.curves) total += e_step(curve, model, config).stats.loglik;
    return total;
}

Curve register_curve(const Curve& curve, const SubjectEffects& effects,
                     const TemplateModel& model) {
    if (effects.id != curve.id)
        throw ConstraintError("register_curve: effects for id " + effects.id +
                              " do not belong to curve " + curve.id);
    const MonotoneWarp warp =
        make_warp(WarpKnots{model.basis.interval(), model.tau0, effects.tau_hat});
    Curve out;
    out.id = curve.id;
    out.y = curve.y;
    out.t.resize(curve.m());
    for (int j = 0; j < curve.m(); ++j) out.t(j) = warp.invert(curve.t(j));
    return out;
}

}  // namespace warpfit
