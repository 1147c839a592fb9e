#pragma once

#include <string>
#include <vector>

#include "warpfit/model.hpp"

namespace warpfit {

struct FitDiagnostics {
    int iterations = 0;
    bool converged = false;
    double final_loglik = 0.0;
    int n_flagged = 0;
    std::vector<std::string> flagged_ids;
    int ridge_events = 0;  // singular normal equations repaired with ridge
};

struct FitResult {
    TemplateModel model;
    std::vector<double> trace;  // marginal log-likelihood per EM iteration
    std::vector<SubjectEffects> effects;
    FitDiagnostics diagnostics;
};

// Closed-form M-step: joint (a, C) from the stacked normal equations, sigma2
// from expected residuals, Sigma from theta moments; then the identifiability
// repair (J-orthonormal eigendecomposition of C Lambda C', decreasing
// eigenvalues, sign convention). theta0 is never updated.
TemplateModel m_step(const SuffStats& stats, const TemplateModel& model, double ridge = 1e-10,
                     int* ridge_events = nullptr);

// Deterministic initialization: a from a pooled no-warp spline fit, C and
// lambda from the J-orthonormalized covariance of per-curve fits, sigma2 from
// pooled residuals, Sigma = 0.25 I, theta started at theta0.
TemplateModel initialize_model(const Dataset& data, const BSplineBasis& basis,
                               const Eigen::VectorXd& tau0, const FitConfig& config);

// EM driver: alternates e_step over subjects and m_step until the relative
// log-likelihood change drops below em_tol. Returns effects from the final
// E-step, consistent with the returned model.
FitResult fit_em(const Dataset& data, const BSplineBasis& basis, const Eigen::VectorXd& tau0,
                 const FitConfig& config);

}  // namespace warpfit
