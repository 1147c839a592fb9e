#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "warpfit/common.hpp"

namespace warpfit {

// One subject's discrimination features: amplitude scores z (length p, may be
// empty), warp knots tau (length r, may be empty), and the binary group label
// (1 = "upper").
struct FeatureRow {
    std::string id;
    Eigen::VectorXd z;
    Eigen::VectorXd tau;
    int label = 0;
};

// logit p(y=1) = alpha + b'z + d'(tau - tau_center). tau is centered before
// fitting for conditioning; alpha_raw() reports the intercept on the raw
// scale (d itself is unaffected by centering).
struct LogisticModel {
    double alpha = 0.0;
    Eigen::VectorXd b;
    Eigen::VectorXd d;           // empty when tau features are excluded
    Eigen::VectorXd tau_center;  // dataset mean of tau at fit time
    double ridge = 0.0;

    double alpha_raw() const { return alpha - d.dot(tau_center); }
};

// Ridge-penalized Bernoulli maximum likelihood by iteratively reweighted
// least squares; the intercept is never penalized. With ridge = 0, diverging
// coefficients (norm > 1e6) raise SeparationError.
LogisticModel fit_logistic(const std::vector<FeatureRow>& rows, bool include_tau, double ridge);

double predict_prob(const LogisticModel& model, const FeatureRow& row);

inline int classify(const LogisticModel& model, const FeatureRow& row) {
    return predict_prob(model, row) >= 0.5 ? 1 : 0;
}

struct CVCell {
    int p = 0;
    bool with_tau = false;
    int folds = 0;
    double cmr = 1.0;          // misclassified fraction over scored subjects
    int flagged_folds = 0;     // folds skipped (single-class training, ridge 0)
    std::vector<std::string> ids;
    std::vector<double> held_out_prob;  // NaN for subjects in flagged folds
    std::vector<int> held_out_label;
    std::vector<int> predicted;
};

struct CVReport {
    std::vector<CVCell> cells;
    std::vector<std::vector<int>> fold_assignment;  // fold index -> row indices
};

// Features for one value of p, fit on the given training subset. Two-step CV
// ignores train_ids (features come from the full-data registration fit);
// full-pipeline CV refits registration on the training subjects only.
using FeatureSource =
    std::function<std::vector<FeatureRow>(int p, const std::vector<std::string>& train_ids)>;

// Wraps precomputed per-p features (the default two-step protocol).
FeatureSource precomputed_features(std::vector<std::pair<int, std::vector<FeatureRow>>> per_p);

// Cross-validated misclassification rates for each p in p_values, with and
// without tau features (plus the warp-only p = 0 row when tau is included).
// folds = 0 or folds = n means leave-one-out; otherwise seeded k-fold.
CVReport cross_validate(const FeatureSource& source, const std::vector<int>& p_values,
                        bool include_tau, int folds, double ridge, unsigned long long seed);

// CSV table: p,features,folds,cmr,flagged_folds.
std::string cv_report_csv(const CVReport& report);

}  // namespace warpfit
