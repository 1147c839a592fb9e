#pragma once

#include <string>
#include <vector>

#include "warpfit/model.hpp"

namespace warpfit {

// Generative specification: draws theta_i ~ N(theta0, Sigma), z_i ~ N(0,
// Lambda), eps ~ N(0, sigma2), builds y through the warped template, and
// assigns labels from a logistic mechanism on (z_i, tau_i).
struct SimSpec {
    TemplateModel model;
    int n = 40;
    int m = 30;

    enum class GridPolicy { common_equispaced, random_incomplete };
    GridPolicy grid_policy = GridPolicy::common_equispaced;
    // random_incomplete: right endpoints drawn uniformly in
    // [lo + min_span * length, hi], interior points uniform
    double min_span = 0.5;

    double label_alpha = 0.0;
    Eigen::VectorXd label_b;  // length p
    Eigen::VectorXd label_d;  // length r, applies to raw tau
    unsigned long long seed = 1;

    void validate() const;
};

struct SimTruth {
    struct Subject {
        std::string id;
        Eigen::VectorXd theta;
        Eigen::VectorXd tau;
        Eigen::VectorXd z;
        double prob = 0.5;
        int label = 0;
    };
    std::vector<Subject> subjects;
};

// Fully deterministic given spec.seed.
std::pair<Dataset, SimTruth> simulate(const SimSpec& spec);

}  // namespace warpfit
