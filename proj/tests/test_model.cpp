#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_models_common.hpp"
#include "warpfit/em.hpp"
#include "warpfit/model.hpp"
#include "warpfit/optim.hpp"
#include "warpfit/simulate.hpp"

using namespace warpfit;

namespace {

Curve simulate_one(const TemplateModel& model, const ThetaVector& theta, const Eigen::VectorXd& z,
                   int m, double noise_sd, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Interval iv = model.basis.interval();
    Curve c;
    c.id = "sim";
    c.t.resize(m);
    for (int j = 0; j < m; ++j) c.t(j) = iv.lo + iv.length() * j / (m - 1);
    const MonotoneWarp warp = warp_from_theta(theta, model.tau0, iv);
    const Eigen::VectorXd coef = model.a + model.C * z;
    c.y.resize(m);
    for (int j = 0; j < m; ++j)
        c.y(j) = model.basis.eval(warp.invert(c.t(j))).dot(coef) + noise_sd * normal(rng);
    return c;
}

// log integrand for the r=1 grid oracles
double log_integrand(const Curve& curve, double theta, const TemplateModel& model) {
    Eigen::VectorXd th(1);
    th << theta;
    return theta_objective(curve, th, model);
}

}  // namespace

TEST_CASE("design_matrix: theta0 gives the identity warp") {
    const TemplateModel model = testutil::default_layout_model();
    const Curve curve = simulate_one(model, model.theta0, Eigen::VectorXd::Zero(2), 30, 0.1, 1);
    const Eigen::MatrixXd phi = design_matrix(curve, model.theta0, model);
    for (int j = 0; j < curve.m(); ++j) {
        const Eigen::VectorXd direct = model.basis.eval(curve.t(j));
        CHECK((phi.row(j).transpose() - direct).lpNorm<Eigen::Infinity>() < 1e-9);
        CHECK(std::abs(phi.row(j).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("design_matrix: rows sum to one for any theta") {
    const TemplateModel model = testutil::default_layout_model();
    const Curve curve = simulate_one(model, model.theta0, Eigen::VectorXd::Zero(2), 30, 0.1, 2);
    std::mt19937 rng(3);
    std::normal_distribution<double> normal(0.0, 0.5);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd theta(3);
        for (int k = 0; k < 3; ++k) theta(k) = normal(rng);
        const Eigen::MatrixXd phi = design_matrix(curve, theta, model);
        for (int j = 0; j < curve.m(); ++j) CHECK(std::abs(phi.row(j).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("design_matrix: matches the composed pipeline step by step") {
    const TemplateModel model = testutil::default_layout_model();
    const Curve curve = simulate_one(model, model.theta0, Eigen::VectorXd::Zero(2), 12, 0.1, 4);
    Eigen::VectorXd theta(3);
    theta << 0.1, -0.2, 0.05;
    const Eigen::MatrixXd phi = design_matrix(curve, theta, model);

    const Eigen::VectorXd tau = jupp_inverse(theta, model.basis.interval());
    const MonotoneWarp h = make_warp(WarpKnots{model.basis.interval(), model.tau0, tau});
    for (int j = 0; j < curve.m(); ++j) {
        const double s = h.invert(curve.t(j));
        const Eigen::VectorXd expected = model.basis.eval(s);
        CHECK((phi.row(j).transpose() - expected).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("conditional_loglik: zero residual, p = 0") {
    TemplateModel model = testutil::default_layout_model();
    model.C = Eigen::MatrixXd::Zero(model.q(), 0);
    model.lambda = Eigen::VectorXd(0);
    model.sigma2 = 0.04;

    Curve curve;
    curve.id = "exact";
    const int m = 10;
    curve.t.resize(m);
    curve.y.resize(m);
    for (int j = 0; j < m; ++j) {
        curve.t(j) = -75.0 + 7.0 * j;
        curve.y(j) = model.basis.eval(curve.t(j)).dot(model.a);
    }
    const double ll = conditional_loglik(curve, model.theta0, model);
    const double expected = -0.5 * m * std::log(2.0 * M_PI * model.sigma2);
    CHECK(ll == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("conditional_loglik: Woodbury equals the dense evaluation") {
    const TemplateModel model = testutil::default_layout_model();
    std::mt19937 rng(11);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int rep = 0; rep < 25; ++rep) {
        Eigen::VectorXd theta(3);
        for (int k = 0; k < 3; ++k) theta(k) = 0.3 * normal(rng);
        Eigen::VectorXd z(2);
        z << std::sqrt(4.0) * normal(rng), normal(rng);
        const Curve curve = simulate_one(model, theta, z, 30, 0.1, 100 + rep);

        const double fast = conditional_loglik(curve, theta, model);

        const Eigen::MatrixXd phi = design_matrix(curve, theta, model);
        const Eigen::MatrixXd cov =
            phi * model.C * model.lambda.asDiagonal() * model.C.transpose() * phi.transpose() +
            model.sigma2 * Eigen::MatrixXd::Identity(curve.m(), curve.m());
        const double dense = oracles::dense_gaussian_loglik(curve.y, phi * model.a, cov);
        CHECK(std::abs(fast - dense) < 1e-8);
    }
}

TEST_CASE("conditional_loglik: rejects nonpositive sigma2") {
    TemplateModel model = testutil::default_layout_model();
    const Curve curve = simulate_one(model, model.theta0, Eigen::VectorXd::Zero(2), 10, 0.1, 5);
    model.sigma2 = 0.0;
    CHECK_THROWS_AS(conditional_loglik(curve, model.theta0, model), warpfit::ParameterError);
}

TEST_CASE("posterior_theta_map: recovers theta0 at tiny noise") {
    TemplateModel model = testutil::toy_r1_model();
    model.sigma2 = 1e-6;
    const Curve curve =
        simulate_one(model, model.theta0, Eigen::VectorXd::Zero(1), 20, std::sqrt(model.sigma2), 7);
    const ThetaMap map = posterior_theta_map(curve, model);
    CHECK(map.converged);
    CHECK(std::abs(map.theta(0) - model.theta0(0)) < 0.05);
}

TEST_CASE("posterior_theta_map: stationarity and grid oracle on the toy problem") {
    const TemplateModel model = testutil::toy_r1_model();
    Eigen::VectorXd theta_true(1), z_true(1);
    theta_true << 0.25;
    z_true << 0.4;
    const Curve curve = simulate_one(model, theta_true, z_true, 15, 0.1, 9);

    const ThetaMap map = posterior_theta_map(curve, model);
    CHECK(map.converged);

    const auto neg = [&](const Eigen::VectorXd& th) { return -theta_objective(curve, th, model); };
    const Eigen::VectorXd grad = oracles::fd_gradient(neg, map.theta, 1e-6);
    CHECK(grad.norm() < 1e-5);

    // 10001-point grid search over theta in [-1.5, 1.5]
    double best_theta = 0.0, best_val = -1e300;
    for (int i = 0; i <= 10000; ++i) {
        const double th = -1.5 + 3.0 * i / 10000.0;
        const double val = log_integrand(curve, th, model);
        if (val > best_val) {
            best_val = val;
            best_theta = th;
        }
    }
    CHECK(std::abs(map.theta(0) - best_theta) <= 3.0 / 10000.0 + 1e-9);

    // curvature is positive at the mode
    CHECK(map.hessian(0, 0) > 0.0);
}

TEST_CASE("theta objective gradient: optimizer internals match an independent step size") {
    const TemplateModel model = testutil::default_layout_model();
    const Curve curve = simulate_one(model, model.theta0, Eigen::VectorXd::Zero(2), 20, 0.1, 13);
    const auto f = [&](const Eigen::VectorXd& th) { return theta_objective(curve, th, model); };
    std::mt19937 rng(17);
    std::normal_distribution<double> normal(0.0, 0.3);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd theta(3);
        for (int k = 0; k < 3; ++k) theta(k) = normal(rng);
        const Eigen::VectorXd internal = warpfit::fd_gradient(f, theta, 1e-6);
        const Eigen::VectorXd external = oracles::fd_gradient(f, theta, 1e-5);
        CHECK((internal - external).norm() <= 1e-4 * std::max(1.0, external.norm()));
    }
}

TEST_CASE("e_step: one-node Laplace quadrature is exactly hard EM") {
    const TemplateModel model = testutil::default_layout_model();
    Eigen::VectorXd theta_true(3), z_true(2);
    theta_true << 0.2, -0.1, 0.15;
    z_true << 1.0, -0.5;
    const Curve curve = simulate_one(model, theta_true, z_true, 30, 0.1, 19);

    FitConfig one_node;
    one_node.p = 2;
    one_node.quad_points_per_dim = 1;
    one_node.estep_mode = FitConfig::EStepMode::laplace_ghq;
    FitConfig hard = one_node;
    hard.quad_points_per_dim = 5;  // ignored in map_hard mode
    hard.estep_mode = FitConfig::EStepMode::map_hard;

    const EStepResult a = e_step(curve, model, one_node);
    const EStepResult b = e_step(curve, model, hard);
    CHECK((a.stats.bw_lhs - b.stats.bw_lhs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.stats.bw_rhs - b.stats.bw_rhs).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.stats.loglik == b.stats.loglik);
    CHECK((a.effects.theta_hat - b.effects.theta_hat).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.effects.z_hat - b.effects.z_hat).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("e_step: degenerate Sigma pins theta at theta0 with fixed-design z posterior") {
    TemplateModel model = testutil::default_layout_model();
    model.Sigma = Eigen::MatrixXd::Zero(3, 3);
    Eigen::VectorXd z_true(2);
    z_true << 1.5, -0.7;
    const Curve curve = simulate_one(model, model.theta0, z_true, 30, 0.1, 23);

    FitConfig config;
    config.p = 2;
    const EStepResult res = e_step(curve, model, config);
    CHECK((res.effects.theta_hat - model.theta0).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(res.effects.theta_cov.cwiseAbs().maxCoeff() == 0.0);

    // fixed-design Gaussian posterior for z at Phi(theta0)
    const Eigen::MatrixXd phi = design_matrix(curve, model.theta0, model);
    const Eigen::MatrixXd u = phi * model.C;
    const Eigen::MatrixXd prec =
        u.transpose() * u / model.sigma2 +
        Eigen::MatrixXd(model.lambda.cwiseInverse().asDiagonal());
    const Eigen::MatrixXd vcov = prec.inverse();
    const Eigen::VectorXd mean = vcov * u.transpose() * (curve.y - phi * model.a) / model.sigma2;
    CHECK((res.effects.z_hat - mean).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((res.effects.z_cov - vcov).cwiseAbs().maxCoeff() < 1e-10);

    // marginal contribution equals the conditional at theta0
    CHECK(res.stats.loglik ==
          doctest::Approx(conditional_loglik(curve, model.theta0, model)).epsilon(1e-12));
}

TEST_CASE("e_step and marginal_loglik: grid-integration oracle on the r=1 toy") {
    const TemplateModel model = testutil::toy_r1_model();
    Eigen::VectorXd theta_true(1), z_true(1);
    theta_true << 0.3;
    z_true << -0.6;
    const Curve curve = simulate_one(model, theta_true, z_true, 15, 0.1, 29);

    // 10001-point grid over theta
    const double lo = -2.0, hi = 2.0;
    const int n_grid = 10001;
    std::vector<double> logs(n_grid);
    for (int i = 0; i < n_grid; ++i)
        logs[i] = log_integrand(curve, lo + (hi - lo) * i / (n_grid - 1.0), model);
    const double top = *std::max_element(logs.begin(), logs.end());
    double mass = 0.0, mean_num = 0.0;
    for (int i = 0; i < n_grid; ++i) {
        const double w = std::exp(logs[i] - top);
        mass += w;
        mean_num += w * (lo + (hi - lo) * i / (n_grid - 1.0));
    }
    const double grid_logz = top + std::log(mass * (hi - lo) / (n_grid - 1.0));
    const double grid_mean = mean_num / mass;

    FitConfig config;
    config.p = 1;
    config.quad_points_per_dim = 5;
    const EStepResult res = e_step(curve, model, config);
    CHECK(std::abs(res.stats.loglik - grid_logz) < 1e-4);
    CHECK(std::abs(res.effects.theta_hat(0) - grid_mean) < 1e-3);

    Dataset single;
    single.curves.push_back(curve);
    CHECK(std::abs(marginal_loglik(single, model, config) - grid_logz) < 1e-4);
}

TEST_CASE("marginal_loglik: degenerate Sigma and permutation invariance") {
    TemplateModel model = testutil::default_layout_model();
    model.Sigma = Eigen::MatrixXd::Zero(3, 3);

    Dataset data;
    for (int i = 0; i < 4; ++i) {
        Eigen::VectorXd z(2);
        z << 0.5 * i, -0.2 * i;
        Curve c = simulate_one(model, model.theta0, z, 12 + i, 0.1, 31 + i);
        c.id = "c" + std::to_string(i);
        data.curves.push_back(std::move(c));
    }
    FitConfig config;
    config.p = 2;
    const double ll = marginal_loglik(data, model, config);
    double direct = 0.0;
    for (const auto& c : data.curves) direct += conditional_loglik(c, model.theta0, model);
    CHECK(ll == doctest::Approx(direct).epsilon(1e-12));

    std::reverse(data.curves.begin(), data.curves.end());
    CHECK(marginal_loglik(data, model, config) == doctest::Approx(ll).epsilon(1e-13));
}

TEST_CASE("m_step: hand-computed update on a frozen fixture") {
    // tiny layout: linear basis on [0,1], q = 2, p = 1, r = 1
    BSplineBasis basis(1, Interval{0.0, 1.0}, {});
    const Eigen::MatrixXd gram = basis.gram();
    Eigen::VectorXd tau0(1);
    tau0 << 0.5;
    TemplateModel model{basis,
                        Eigen::VectorXd::Zero(2),
                        Eigen::MatrixXd::Zero(2, 1),
                        Eigen::VectorXd::Ones(1),
                        1.0,
                        tau0,
                        jupp_forward(tau0, Interval{0.0, 1.0}),
                        Eigen::MatrixXd::Identity(1, 1),
                        gram};

    SuffStats stats(2, 1, 1);
    Eigen::MatrixXd w_mat(2, 2), ptp(2, 2);
    w_mat << 1.0, 0.3, 0.3, 0.5;
    ptp << 2.0, 0.4, 0.4, 1.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) stats.bw_lhs.block(a * 2, b * 2, 2, 2) = w_mat(a, b) * ptp;
    Eigen::VectorXd pty(2);
    pty << 1.2, 0.7;
    stats.bw_rhs.col(0) = pty;
    stats.bw_rhs.col(1) = 0.3 * pty;
    stats.yty = 5.0;
    stats.m_total = 7.0;
    stats.n_subjects = 2;
    stats.theta_outer << 0.8;
    stats.z_second << 0.9;

    const TemplateModel updated = m_step(stats, model);

    // expected values recomputed from the closed forms with a different solver
    const Eigen::Map<const Eigen::VectorXd> rhs_vec(stats.bw_rhs.data(), 4);
    const Eigen::VectorXd b_vec = stats.bw_lhs.fullPivLu().solve(rhs_vec);
    const Eigen::VectorXd a_expect = b_vec.head(2);
    const Eigen::VectorXd c_raw = b_vec.tail(2);
    CHECK((updated.a - a_expect).lpNorm<Eigen::Infinity>() < 1e-10);

    const double rss = stats.yty - 2.0 * b_vec.dot(rhs_vec) + b_vec.dot(stats.bw_lhs * b_vec);
    CHECK(updated.sigma2 == doctest::Approx(rss / stats.m_total).epsilon(1e-10));

    CHECK(updated.Sigma(0, 0) == doctest::Approx(0.8 / 2.0).epsilon(1e-12));

    // identifiability repair on M = c lambda c'
    const double lambda_raw = 0.9 / 2.0;
    const Eigen::MatrixXd m_mat = lambda_raw * c_raw * c_raw.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram_eig(gram);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_eig.operatorSqrt() * m_mat *
                                                       gram_eig.operatorSqrt());
    const double lambda_expect = eig.eigenvalues()(1);
    Eigen::VectorXd c_expect = gram_eig.operatorInverseSqrt() * eig.eigenvectors().col(1);
    int arg = 0;
    c_expect.cwiseAbs().maxCoeff(&arg);
    if (c_expect(arg) < 0.0) c_expect = -c_expect;
    CHECK(updated.lambda(0) == doctest::Approx(lambda_expect).epsilon(1e-10));
    CHECK((updated.C.col(0) - c_expect).lpNorm<Eigen::Infinity>() < 1e-10);

    // theta0 untouched
    CHECK((updated.theta0 - model.theta0).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("m_step output satisfies the identifiability invariants") {
    const TemplateModel gen = testutil::default_layout_model();
    Dataset data;
    std::mt19937 rng(37);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 8; ++i) {
        Eigen::VectorXd theta(3), z(2);
        for (int k = 0; k < 3; ++k) theta(k) = 0.15 * normal(rng);
        z << 2.0 * normal(rng), normal(rng);
        Curve c = simulate_one(gen, theta, z, 25, 0.1, 41 + i);
        c.id = "m" + std::to_string(i);
        data.curves.push_back(std::move(c));
    }
    FitConfig config;
    config.p = 2;
    config.quad_points_per_dim = 3;
    SuffStats stats(gen.q(), 2, 3);
    for (const auto& c : data.curves) stats += e_step(c, gen, config).stats;
    const TemplateModel updated = m_step(stats, gen);

    const Eigen::MatrixXd ortho = updated.C.transpose() * updated.gram * updated.C;
    CHECK((ortho - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(updated.lambda(0) >= updated.lambda(1));
    CHECK(updated.lambda(1) > 0.0);
    for (int k = 0; k < 2; ++k) {
        int arg = 0;
        updated.C.col(k).cwiseAbs().maxCoeff(&arg);
        CHECK(updated.C(arg, k) > 0.0);
    }
    CHECK(updated.sigma2 > 0.0);
    CHECK((updated.Sigma - updated.Sigma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("m_step: p = 0 reduces to least squares for the mean") {
    TemplateModel model = testutil::default_layout_model();
    model.C = Eigen::MatrixXd::Zero(model.q(), 0);
    model.lambda = Eigen::VectorXd(0);
    model.Sigma = Eigen::MatrixXd::Zero(3, 3);

    Dataset data;
    for (int i = 0; i < 5; ++i) {
        Curve c =
            simulate_one(model, model.theta0, Eigen::VectorXd(0), 20, 0.2, 47 + i);
        c.id = "p0_" + std::to_string(i);
        data.curves.push_back(std::move(c));
    }
    FitConfig config;
    config.p = 0;
    SuffStats stats(model.q(), 0, 3);
    for (const auto& c : data.curves) stats += e_step(c, model, config).stats;
    const TemplateModel updated = m_step(stats, model);

    // direct least squares with identity warps
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(model.q(), model.q());
    Eigen::VectorXd aty = Eigen::VectorXd::Zero(model.q());
    for (const auto& c : data.curves) {
        const Eigen::MatrixXd phi = design_matrix(c, model.theta0, model);
        ata += phi.transpose() * phi;
        aty += phi.transpose() * c.y;
    }
    const Eigen::VectorXd a_direct = ata.fullPivLu().solve(aty);
    CHECK((updated.a - a_direct).lpNorm<Eigen::Infinity>() < 1e-8);

    double rss = 0.0, m_total = 0.0;
    for (const auto& c : data.curves) {
        const Eigen::MatrixXd phi = design_matrix(c, model.theta0, model);
        rss += (c.y - phi * a_direct).squaredNorm();
        m_total += c.m();
    }
    CHECK(updated.sigma2 == doctest::Approx(rss / m_total).epsilon(1e-8));
}

TEST_CASE("fit_em: p=0 no-warp fixture matches the direct spline solve") {
    const TemplateModel gen = testutil::default_layout_model();
    Dataset data;
    for (int i = 0; i < 6; ++i) {
        Curve c = simulate_one(gen, gen.theta0, Eigen::VectorXd::Zero(2), 18, 0.15, 53 + i);
        c.id = "f" + std::to_string(i);
        data.curves.push_back(std::move(c));
    }
    FitConfig config;
    config.p = 0;
    config.max_em_iters = 10;
    const Eigen::VectorXd no_knots(0);  // r = 0: no warping at all
    const FitResult fit = fit_em(data, gen.basis, no_knots, config);
    CHECK(fit.diagnostics.converged);

    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(gen.q(), gen.q());
    Eigen::VectorXd aty = Eigen::VectorXd::Zero(gen.q());
    double m_total = 0.0;
    for (const auto& c : data.curves) {
        for (int j = 0; j < c.m(); ++j) {
            const Eigen::VectorXd row = gen.basis.eval(c.t(j));
            ata += row * row.transpose();
            aty += row * c.y(j);
        }
        m_total += c.m();
    }
    const Eigen::VectorXd a_direct = ata.fullPivLu().solve(aty);
    CHECK((fit.model.a - a_direct).lpNorm<Eigen::Infinity>() < 1e-8);

    double rss = 0.0;
    for (const auto& c : data.curves)
        for (int j = 0; j < c.m(); ++j) rss += std::pow(c.y(j) - gen.basis.eval(c.t(j)).dot(a_direct), 2);
    CHECK(fit.model.sigma2 == doctest::Approx(rss / m_total).epsilon(1e-8));
}

TEST_CASE("fit_em: ascent and rough recovery on a small seeded problem") {
    TemplateModel gen = testutil::toy_r1_model();
    gen.Sigma(0, 0) = 0.04;

    SimSpec spec;
    spec.model = gen;
    spec.n = 14;
    spec.m = 20;
    spec.label_b = Eigen::VectorXd::Zero(1);
    spec.seed = 59;
    auto [data, truth] = simulate(spec);

    FitConfig config;
    config.p = 1;
    config.quad_points_per_dim = 5;
    config.max_em_iters = 25;
    config.em_tol = 1e-7;
    const FitResult fit = fit_em(data, gen.basis, gen.tau0, config);

    REQUIRE(fit.trace.size() >= 2);
    for (size_t i = 1; i < fit.trace.size(); ++i) {
        const double slack = 10.0 * config.em_tol * std::max(1.0, std::abs(fit.trace[i - 1]));
        CHECK(fit.trace[i] >= fit.trace[i - 1] - slack);
    }

    CHECK(fit.model.sigma2 == doctest::Approx(gen.sigma2).epsilon(0.5));
    // component recovery: |cos angle| in the J metric close to 1
    const double cosang = std::abs(
        (fit.model.C.col(0).transpose() * gen.gram * gen.C.col(0))(0, 0));
    CHECK(cosang > 0.9);

    // warp knots roughly recovered
    double err = 0.0;
    for (int i = 0; i < spec.n; ++i)
        err += (fit.effects[i].tau_hat - truth.subjects[i].tau).cwiseAbs().mean();
    err /= spec.n;
    CHECK(err < 4.0);
}

TEST_CASE("fit_em: worker threads reproduce the single-threaded fit exactly") {
    TemplateModel gen = testutil::toy_r1_model();
    SimSpec spec;
    spec.model = gen;
    spec.n = 6;
    spec.m = 12;
    spec.label_b = Eigen::VectorXd::Zero(1);
    spec.seed = 97;
    auto [data, truth] = simulate(spec);

    FitConfig config;
    config.p = 1;
    config.quad_points_per_dim = 3;
    config.max_em_iters = 6;
    const FitResult serial = fit_em(data, gen.basis, gen.tau0, config);
    config.threads = 3;
    const FitResult parallel = fit_em(data, gen.basis, gen.tau0, config);

    REQUIRE(serial.trace.size() == parallel.trace.size());
    for (size_t i = 0; i < serial.trace.size(); ++i) CHECK(serial.trace[i] == parallel.trace[i]);
    CHECK((serial.model.a - parallel.model.a).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((serial.model.C - parallel.model.C).cwiseAbs().maxCoeff() == 0.0);
    CHECK(serial.model.sigma2 == parallel.model.sigma2);
}

TEST_CASE("fit_em: shortening one curve changes only that contribution") {
    const TemplateModel gen = testutil::default_layout_model();
    Dataset data;
    std::mt19937 rng(61);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 4; ++i) {
        Eigen::VectorXd theta(3), z(2);
        for (int k = 0; k < 3; ++k) theta(k) = 0.1 * normal(rng);
        z << normal(rng), 0.5 * normal(rng);
        Curve c = simulate_one(gen, theta, z, 24, 0.1, 67 + i);
        c.id = "s" + std::to_string(i);
        data.curves.push_back(std::move(c));
    }
    FitConfig config;
    config.p = 2;
    config.quad_points_per_dim = 3;

    std::vector<double> base;
    for (const auto& c : data.curves) base.push_back(e_step(c, gen, config).stats.loglik);

    // drop the last 6 observations of curve 2
    Dataset shorter = data;
    shorter.curves[2].t.conservativeResize(18);
    shorter.curves[2].y.conservativeResize(18);
    for (int i = 0; i < 4; ++i) {
        const double ll = e_step(shorter.curves[i], gen, config).stats.loglik;
        if (i == 2)
            CHECK(ll != doctest::Approx(base[i]).epsilon(1e-12));
        else
            CHECK(ll == doctest::Approx(base[i]).epsilon(1e-13));
    }
}

TEST_CASE("register_curve: identity warp leaves the grid unchanged") {
    const TemplateModel model = testutil::default_layout_model();
    const Curve curve = simulate_one(model, model.theta0, Eigen::VectorXd::Zero(2), 20, 0.1, 71);
    SubjectEffects eff;
    eff.id = curve.id;
    eff.theta_hat = model.theta0;
    eff.tau_hat = model.tau0;
    const Curve reg = register_curve(curve, eff, model);
    CHECK((reg.t - curve.t).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((reg.y - curve.y).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("register_curve: monotone grid and forward-warp roundtrip") {
    const TemplateModel model = testutil::default_layout_model();
    Eigen::VectorXd theta(3);
    theta << 0.3, -0.25, 0.1;
    const Curve curve = simulate_one(model, theta, Eigen::VectorXd::Zero(2), 25, 0.1, 73);
    SubjectEffects eff;
    eff.id = curve.id;
    eff.theta_hat = theta;
    eff.tau_hat = jupp_inverse(theta, model.basis.interval());
    const Curve reg = register_curve(curve, eff, model);
    for (int j = 1; j < reg.m(); ++j) CHECK(reg.t(j) > reg.t(j - 1));

    const MonotoneWarp h = make_warp(WarpKnots{model.basis.interval(), model.tau0, eff.tau_hat});
    for (int j = 0; j < reg.m(); ++j) CHECK(std::abs(h(reg.t(j)) - curve.t(j)) < 1e-9);

    SubjectEffects wrong = eff;
    wrong.id = "other";
    CHECK_THROWS_AS(register_curve(curve, wrong, model), warpfit::ConstraintError);
}
