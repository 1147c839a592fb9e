#include "warpfit/em.hpp"

#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

namespace warpfit {

namespace {

// J-orthonormal eigendecomposition of a coefficient-space covariance M:
// eigenpairs of J^{1/2} M J^{1/2}, mapped back so C' J C = I.
void kl_repair(const Eigen::MatrixXd& m_mat, const Eigen::MatrixXd& gram, int p,
               Eigen::MatrixXd& c_out, Eigen::VectorXd& lambda_out) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram_eig(gram);
    const Eigen::MatrixXd j_half = gram_eig.operatorSqrt();
    const Eigen::MatrixXd j_half_inv = gram_eig.operatorInverseSqrt();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j_half * m_mat * j_half);
    const int q = static_cast<int>(gram.rows());
    c_out.resize(q, p);
    lambda_out.resize(p);
    for (int k = 0; k < p; ++k) {
        // eigenvalues come out ascending
        const int src = q - 1 - k;
        lambda_out(k) = std::max(eig.eigenvalues()(src), 1e-12);
        c_out.col(k) = j_half_inv * eig.eigenvectors().col(src);
    }
    // sign convention: largest-magnitude coefficient of each component positive
    for (int k = 0; k < p; ++k) {
        int arg = 0;
        c_out.col(k).cwiseAbs().maxCoeff(&arg);
        if (c_out(arg, k) < 0.0) c_out.col(k) = -c_out.col(k);
    }
}

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& lhs, const Eigen::VectorXd& rhs,
                                       double ridge, int* ridge_events) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    Eigen::VectorXd sol = ldlt.solve(rhs);
    const double resid = (lhs * sol - rhs).norm();
    if (ldlt.info() == Eigen::Success && sol.allFinite() && resid <= 1e-6 * (rhs.norm() + 1.0))
        return sol;
    if (ridge_events) ++(*ridge_events);
    const double scale = std::max(lhs.trace() / lhs.rows(), 1.0);
    Eigen::MatrixXd reg = lhs;
    reg.diagonal().array() += ridge * scale;
    return reg.ldlt().solve(rhs);
}

}  // namespace

TemplateModel m_step(const SuffStats& stats, const TemplateModel& model, double ridge,
                     int* ridge_events) {
    const int q = model.q();
    const int p = model.p();
    TemplateModel out = model;

    const Eigen::Map<const Eigen::VectorXd> rhs_vec(stats.bw_rhs.data(), q * (1 + p));
    const Eigen::VectorXd b_vec =
        solve_normal_equations(stats.bw_lhs, rhs_vec, ridge, ridge_events);
    const Eigen::Map<const Eigen::MatrixXd> b_mat(b_vec.data(), q, 1 + p);

    out.a = b_mat.col(0);

    // expected residual sum of squares at the new coefficients
    const double rss =
        stats.yty - 2.0 * b_vec.dot(rhs_vec) + b_vec.dot(stats.bw_lhs * b_vec);
    out.sigma2 = std::max(rss / stats.m_total, 1e-12);

    out.Sigma = stats.theta_outer / stats.n_subjects;
    out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose()).eval();

    if (p > 0) {
        const Eigen::MatrixXd c_raw = b_mat.rightCols(p);
        Eigen::VectorXd lambda_raw(p);
        for (int k = 0; k < p; ++k)
            lambda_raw(k) = std::max(stats.z_second(k, k) / stats.n_subjects, 1e-12);
        const Eigen::MatrixXd m_mat = c_raw * lambda_raw.asDiagonal() * c_raw.transpose();
        kl_repair(m_mat, model.gram, p, out.C, out.lambda);
    }
    return out;
}

TemplateModel initialize_model(const Dataset& data, const BSplineBasis& basis,
                               const Eigen::VectorXd& tau0, const FitConfig& config) {
    const int q = basis.size();
    const int n = data.n();
    const Eigen::MatrixXd gram = basis.gram();

    // pooled no-warp least squares for the mean
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd aty = Eigen::VectorXd::Zero(q);
    std::vector<Eigen::MatrixXd> designs;
    designs.reserve(n);
    for (const auto& curve : data.curves) {
        Eigen::MatrixXd phi(curve.m(), q);
        for (int j = 0; j < curve.m(); ++j) phi.row(j) = basis.eval(curve.t(j)).transpose();
        ata += phi.transpose() * phi;
        aty += phi.transpose() * curve.y;
        designs.push_back(std::move(phi));
    }
    Eigen::MatrixXd ata_reg = ata;
    ata_reg.diagonal().array() += 1e-10 * std::max(ata.trace() / q, 1.0);
    const Eigen::VectorXd a = ata_reg.ldlt().solve(aty);

    double rss = 0.0, m_total = 0.0;
    for (int i = 0; i < n; ++i) {
        rss += (data.curves[i].y - designs[i] * a).squaredNorm();
        m_total += data.curves[i].m();
    }

    TemplateModel model{basis,
                        a,
                        Eigen::MatrixXd::Zero(q, config.p),
                        Eigen::VectorXd::Zero(config.p),
                        std::max(rss / m_total, 1e-12),
                        tau0,
                        jupp_forward(tau0, basis.interval()),
                        0.25 * Eigen::MatrixXd::Identity(tau0.size(), tau0.size()),
                        gram};

    if (config.p > 0) {
        // covariance of smoothed per-curve coefficients, J-orthonormalized
        Eigen::MatrixXd betas(q, n);
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXd ridge_mat = designs[i].transpose() * designs[i];
            const double scale = std::max(ridge_mat.trace(), 1.0) / std::max(gram.trace(), 1e-12);
            ridge_mat += 1e-3 * scale * gram;
            ridge_mat.diagonal().array() += 1e-8;
            betas.col(i) = ridge_mat.ldlt().solve(designs[i].transpose() * data.curves[i].y);
        }
        const Eigen::VectorXd beta_bar = betas.rowwise().mean();
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(q, q);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd d = betas.col(i) - beta_bar;
            cov += d * d.transpose();
        }
        cov /= n;
        kl_repair(cov, gram, config.p, model.C, model.lambda);
    }
    return model;
}

namespace {

std::vector<EStepResult> run_e_steps(const Dataset& data, const TemplateModel& model,
                                     const FitConfig& config) {
    const int n = data.n();
    std::vector<EStepResult> results(n);
    const int threads = std::max(1, config.threads);
    if (threads == 1) {
        for (int i = 0; i < n; ++i) results[i] = e_step(data.curves[i], model, config);
        return results;
    }
    std::vector<std::future<void>> futures;
    std::atomic<int> next{0};
    for (int w = 0; w < threads; ++w) {
        futures.push_back(std::async(std::launch::async, [&]() {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                results[i] = e_step(data.curves[i], model, config);
            }
        }));
    }
    for (auto& f : futures) f.get();
    return results;
}

}  // namespace

FitResult fit_em(const Dataset& data, const BSplineBasis& basis, const Eigen::VectorXd& tau0,
                 const FitConfig& config) {
    config.validate();
    data.validate();
    if (data.n() < 2) throw ConstraintError("fit_em: need at least two curves");
    for (const auto& curve : data.curves) {
        if (curve.t(0) < basis.interval().lo || curve.t(curve.m() - 1) > basis.interval().hi) {
            std::ostringstream msg;
            msg << "fit_em: curve " << curve.id << " has observations outside ["
                << basis.interval().lo << ", " << basis.interval().hi << "]";
            throw ConstraintError(msg.str());
        }
    }

    FitResult res;
    res.model = initialize_model(data, basis, tau0, config);

    double prev = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < config.max_em_iters; ++iter) {
        const std::vector<EStepResult> steps = run_e_steps(data, res.model, config);

        SuffStats stats(res.model.q(), res.model.p(), res.model.r());
        res.effects.clear();
        for (const auto& s : steps) {
            stats += s.stats;
            res.effects.push_back(s.effects);
        }
        if (stats.n_flagged == data.n())
            throw FitError("fit_em: every subject failed the posterior mode search");

        res.trace.push_back(stats.loglik);
        res.diagnostics.iterations = iter + 1;
        res.diagnostics.final_loglik = stats.loglik;
        res.diagnostics.n_flagged = stats.n_flagged;
        res.diagnostics.flagged_ids.clear();
        for (const auto& s : steps)
            if (s.effects.flagged) res.diagnostics.flagged_ids.push_back(s.effects.id);

        const double rel_change = std::abs(stats.loglik - prev) / (std::abs(prev) + 1.0);
        if (iter > 0 && rel_change < config.em_tol) {
            res.diagnostics.converged = true;
            break;
        }
        prev = stats.loglik;
        if (iter + 1 < config.max_em_iters)
            res.model = m_step(stats, res.model, config.ridge, &res.diagnostics.ridge_events);
    }
    return res;
}

}  // namespace warpfit
