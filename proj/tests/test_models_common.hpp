#pragma once

// Shared generating models for the model/discrimination test suites.

#include <Eigen/Dense>

#include "warpfit/model.hpp"

namespace testutil {

// Columns of raw J-orthonormalized against the basis Gram matrix, with the
// library's sign convention applied.
inline Eigen::MatrixXd j_orthonormalize(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& gram) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram_eig(gram);
    const Eigen::MatrixXd j_half = gram_eig.operatorSqrt();
    const Eigen::MatrixXd j_half_inv = gram_eig.operatorInverseSqrt();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(j_half * raw);
    Eigen::MatrixXd q_full = qr.householderQ();
    Eigen::MatrixXd c = j_half_inv * q_full.leftCols(raw.cols());
    for (int k = 0; k < c.cols(); ++k) {
        int arg = 0;
        c.col(k).cwiseAbs().maxCoeff(&arg);
        if (c(arg, k) < 0.0) c.col(k) = -c.col(k);
    }
    return c;
}

// Two-component model on the default analysis layout (cubic basis, 10
// equispaced interior knots on [-80, 0], tau0 = (-60, -40, -20)).
inline warpfit::TemplateModel default_layout_model(double sigma2 = 0.01) {
    using namespace warpfit;
    BSplineBasis basis = BSplineBasis::equispaced(3, Interval{-80.0, 0.0}, 10);
    const int q = basis.size();
    const Eigen::MatrixXd gram = basis.gram();

    // bumpy mean resembling curvature profiles: peaks near -40 and -20
    Eigen::VectorXd a(q);
    a << 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 0.9, 0.4, 0.8, 1.1, 0.5, 0.9, 0.3, 0.2;

    Eigen::MatrixXd raw(q, 2);
    raw.col(0) << 0.0, 0.0, 0.1, 0.2, 0.5, 1.0, 1.2, 0.6, 0.9, 1.0, 0.3, 0.1, 0.0, 0.0;
    raw.col(1) << 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.2, 0.4, 0.8, 1.2, 1.0, 0.8;
    const Eigen::MatrixXd c = j_orthonormalize(raw, gram);

    Eigen::VectorXd lambda(2);
    lambda << 4.0, 1.0;
    Eigen::VectorXd tau0(3);
    tau0 << -60.0, -40.0, -20.0;

    return TemplateModel{basis,
                         a,
                         c,
                         lambda,
                         sigma2,
                         tau0,
                         jupp_forward(tau0, basis.interval()),
                         0.02 * Eigen::MatrixXd::Identity(3, 3),
                         gram};
}

// Small single-warp-knot model for grid-integration oracles.
inline warpfit::TemplateModel toy_r1_model() {
    using namespace warpfit;
    BSplineBasis basis(3, Interval{-80.0, 0.0}, {-40.0});
    const int q = basis.size();  // 5
    const Eigen::MatrixXd gram = basis.gram();

    Eigen::VectorXd a(q);
    a << 0.5, 1.5, -0.5, 1.0, 0.2;
    Eigen::MatrixXd raw(q, 1);
    raw << 1.0, -1.0, 0.5, 0.3, -0.2;
    const Eigen::MatrixXd c = j_orthonormalize(raw, gram);
    Eigen::VectorXd lambda(1);
    lambda << 0.5;
    Eigen::VectorXd tau0(1);
    tau0 << -40.0;

    return TemplateModel{basis,
                         a,
                         c,
                         lambda,
                         0.01,
                         tau0,
                         jupp_forward(tau0, basis.interval()),
                         0.09 * Eigen::MatrixXd::Identity(1, 1),
                         gram};
}

}  // namespace testutil
