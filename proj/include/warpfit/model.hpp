#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "warpfit/bspline.hpp"
#include "warpfit/dataset.hpp"
#include "warpfit/warp.hpp"

namespace warpfit {

// Population parameters of the random-effects registration model:
//   y_i | (theta_i, z_i) ~ N( Phi_i(theta_i) (a + C z_i), sigma2 I )
//   theta_i ~ N(theta0, Sigma),  z_i ~ N(0, diag(lambda))
// where Phi_i(theta)[j,l] = phi_l( g^{-1}(t_ij, theta) ) and g(., theta) is
// the monotone Hermite warp with knots jupp_inverse(theta) against tau0.
struct TemplateModel {
    BSplineBasis basis;
    Eigen::VectorXd a;       // mean coefficients, length q
    Eigen::MatrixXd C;       // component coefficients, q x p, C' J C = I
    Eigen::VectorXd lambda;  // score variances, decreasing, length p
    double sigma2 = 1.0;
    Eigen::VectorXd tau0;    // reference warp knots, length r
    Eigen::VectorXd theta0;  // Jupp transform of tau0; fixed, not estimated
    Eigen::MatrixXd Sigma;   // warp-effect covariance, r x r
    Eigen::MatrixXd gram;    // cached Gram matrix J of the basis

    int q() const { return basis.size(); }
    int p() const { return static_cast<int>(lambda.size()); }
    int r() const { return static_cast<int>(tau0.size()); }

    // Template member functions on the registered scale.
    double mean_at(double t) const { return basis.eval(t).dot(a); }
    double component_at(int k, double t) const { return basis.eval(t).dot(C.col(k)); }

    void validate() const;
};

struct FitConfig {
    int p = 2;
    int max_em_iters = 200;
    double em_tol = 1e-6;  // relative log-likelihood change
    int quad_points_per_dim = 5;
    enum class EStepMode { laplace_ghq, map_hard };
    EStepMode estep_mode = EStepMode::laplace_ghq;
    unsigned long long seed = 0;
    double ridge = 1e-10;  // fallback for singular normal equations
    int threads = 1;

    void validate() const;
};

// Posterior summaries for one subject under a fitted model.
struct SubjectEffects {
    std::string id;
    Eigen::VectorXd theta_hat;  // posterior mean of theta_i
    Eigen::MatrixXd theta_cov;
    Eigen::VectorXd tau_hat;  // jupp_inverse(theta_hat)
    Eigen::VectorXd z_hat;    // posterior mean of z_i
    Eigen::MatrixXd z_cov;
    double loglik_contrib = 0.0;
    bool flagged = false;  // MAP search failed; subject fell back to theta0
};

// Posterior expectations accumulated over subjects for the M-step. With
// B = [a C] and w_i = (1, z_i')', the (a, C) update solves
//   lhs * vec(B) = vec(rhs).
struct SuffStats {
    Eigen::MatrixXd bw_lhs;        // sum_i E[ w w' (x) Phi'Phi ],  q(1+p) square
    Eigen::MatrixXd bw_rhs;        // sum_i E[ Phi' y w' ],         q x (1+p)
    double yty = 0.0;              // sum_i y_i' y_i
    Eigen::MatrixXd theta_outer;   // sum_i E[(theta_i - theta0)(theta_i - theta0)']
    Eigen::MatrixXd z_second;      // sum_i E[z_i z_i']
    double m_total = 0.0;          // sum_i m_i
    int n_subjects = 0;
    double loglik = 0.0;           // sum of marginal contributions
    int n_flagged = 0;

    SuffStats() = default;
    SuffStats(int q, int p, int r);
    SuffStats& operator+=(const SuffStats& other);
};

// Design matrix Phi_i(theta): row j is the basis at warp_invert(g(., theta), t_ij).
Eigen::MatrixXd design_matrix(const Curve& curve, const ThetaVector& theta,
                              const TemplateModel& model);

// log N(y_i; Phi a, Phi C Lambda C' Phi' + sigma2 I) with z integrated out
// analytically (Woodbury, O(m p^2)).
double conditional_loglik(const Curve& curve, const ThetaVector& theta,
                          const TemplateModel& model);

// Same quantity given a precomputed design matrix.
double conditional_loglik_with_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& phi,
                                      const TemplateModel& model);

// Log of the theta-integrand: conditional_loglik + log N(theta; theta0, Sigma).
// Returns -inf where the warp degenerates, so optimizers back off.
double theta_objective(const Curve& curve, const ThetaVector& theta, const TemplateModel& model);

struct ThetaMap {
    ThetaVector theta;
    Eigen::MatrixXd hessian;  // negative curvature of the log integrand, PD-floored
    bool converged = true;
};

// Maximizer of the theta-integrand, quasi-Newton from theta0 with axis-
// perturbation multistart; Hessian by central finite differences, symmetrized
// and eigenvalue-floored at 1e-8.
ThetaMap posterior_theta_map(const Curve& curve, const TemplateModel& model);

struct EStepResult {
    SuffStats stats;
    SubjectEffects effects;
};

// Per-subject E-step: adaptive Gauss-Hermite quadrature centered at the MAP
// (laplace_ghq) or the single MAP node (map_hard); z-moments are exact
// Gaussian conditionals at every node.
EStepResult e_step(const Curve& curve, const TemplateModel& model, const FitConfig& config);

// Sum over subjects of log \int N(y_i; ...) N(theta; theta0, Sigma) dtheta
// under the same quadrature scheme as e_step.
double marginal_loglik(const Dataset& data, const TemplateModel& model, const FitConfig& config);

// Aligned curve: grid mapped through the inverse warp, values unchanged.
Curve register_curve(const Curve& curve, const SubjectEffects& effects,
                     const TemplateModel& model);

}  // namespace warpfit
