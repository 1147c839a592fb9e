#include "warpfit/discriminate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "warpfit/rng.hpp"

namespace warpfit {

namespace {

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

void check_rows(const std::vector<FeatureRow>& rows) {
    if (rows.size() < 2) throw ConstraintError("fit_logistic: need at least two rows");
    const int p = static_cast<int>(rows.front().z.size());
    const int r = static_cast<int>(rows.front().tau.size());
    for (const auto& row : rows) {
        if (row.z.size() != p || row.tau.size() != r)
            throw ConstraintError("fit_logistic: inconsistent feature lengths for id " + row.id);
        if (row.label != 0 && row.label != 1)
            throw ConstraintError("fit_logistic: label must be 0 or 1 for id " + row.id);
    }
}

}  // namespace

LogisticModel fit_logistic(const std::vector<FeatureRow>& rows, bool include_tau, double ridge) {
    check_rows(rows);
    if (ridge < 0.0) throw ConstraintError("fit_logistic: ridge must be nonnegative");
    const int n = static_cast<int>(rows.size());
    const int p = static_cast<int>(rows.front().z.size());
    const int r = include_tau ? static_cast<int>(rows.front().tau.size()) : 0;
    const int k = 1 + p + r;

    LogisticModel model;
    model.ridge = ridge;
    model.tau_center = Eigen::VectorXd::Zero(r);
    if (r > 0) {
        for (const auto& row : rows) model.tau_center += row.tau;
        model.tau_center /= n;
    }

    int n_pos = 0;
    for (const auto& row : rows) n_pos += row.label;
    if (n_pos == 0 || n_pos == n) {
        if (ridge <= 0.0)
            throw SeparationError(
                "fit_logistic: all labels identical; the unpenalized likelihood diverges "
                "(use ridge > 0)");
        // slopes shrink to zero; smoothed prevalence sets the intercept
        const double prevalence = (n_pos + 0.5) / (n + 1.0);
        model.alpha = std::log(prevalence / (1.0 - prevalence));
        model.b = Eigen::VectorXd::Zero(p);
        model.d = Eigen::VectorXd::Zero(r);
        return model;
    }

    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x.row(i).segment(1, p) = rows[i].z.transpose();
        if (r > 0) x.row(i).segment(1 + p, r) = (rows[i].tau - model.tau_center).transpose();
        y(i) = rows[i].label;
    }
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k, ridge);
    penalty(0) = 0.0;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    for (int iter = 0; iter < 100; ++iter) {
        Eigen::VectorXd prob(n), weight(n);
        for (int i = 0; i < n; ++i) {
            prob(i) = logistic(x.row(i).dot(beta));
            weight(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-10);
        }
        const Eigen::VectorXd grad =
            x.transpose() * (y - prob) - penalty.cwiseProduct(beta);
        Eigen::MatrixXd hess = x.transpose() * weight.asDiagonal() * x;
        hess.diagonal() += penalty;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        beta += step;
        if (ridge <= 0.0) {
            if (beta.lpNorm<Eigen::Infinity>() > 1e6)
                throw SeparationError(
                    "fit_logistic: coefficients diverging, data are separable (use ridge > 0)");
            // a margin-respecting zero-error classification proves separability,
            // so the unpenalized likelihood has no maximizer
            double min_margin = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                const double eta = x.row(i).dot(beta);
                min_margin = std::min(min_margin, y(i) > 0.5 ? eta : -eta);
            }
            if (min_margin > 1e-3)
                throw SeparationError(
                    "fit_logistic: data are completely separable, the unpenalized likelihood "
                    "diverges (use ridge > 0)");
        }
        if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }

    model.alpha = beta(0);
    model.b = beta.segment(1, p);
    model.d = beta.segment(1 + p, r);
    return model;
}

double predict_prob(const LogisticModel& model, const FeatureRow& row) {
    if (row.z.size() != model.b.size())
        throw ConstraintError("predict_prob: z length does not match the model");
    double eta = model.alpha + model.b.dot(row.z);
    if (model.d.size() > 0) {
        if (row.tau.size() != model.d.size())
            throw ConstraintError("predict_prob: tau length does not match the model");
        eta += model.d.dot(row.tau - model.tau_center);
    }
    return logistic(eta);
}

FeatureSource precomputed_features(std::vector<std::pair<int, std::vector<FeatureRow>>> per_p) {
    return [per_p = std::move(per_p)](int p, const std::vector<std::string>&) {
        for (const auto& [pv, rows] : per_p)
            if (pv == p) return rows;
        throw ConstraintError("cross_validate: no features available for p = " +
                              std::to_string(p));
    };
}

namespace {

std::vector<std::vector<int>> make_folds(int n, int folds, unsigned long long seed) {
    if (folds <= 0 || folds >= n) {
        std::vector<std::vector<int>> out(n);
        for (int i = 0; i < n; ++i) out[i] = {i};
        return out;
    }
    Rng rng(seed);
    const std::vector<int> perm = rng.permutation(n);
    std::vector<std::vector<int>> out(folds);
    for (int i = 0; i < n; ++i) out[i % folds].push_back(perm[i]);
    for (auto& fold : out) std::sort(fold.begin(), fold.end());
    return out;
}

// Restrict each row to its first p score components (features computed under a
// larger model cannot leak extra columns into a smaller fit).
std::vector<FeatureRow> restrict_p(std::vector<FeatureRow> rows, int p) {
    for (auto& row : rows) {
        if (row.z.size() < p)
            throw ConstraintError("cross_validate: feature row " + row.id +
                                  " has fewer than p scores");
        row.z.conservativeResize(p);
    }
    return rows;
}

CVCell run_cell(const FeatureSource& source, int p, bool with_tau,
                const std::vector<std::vector<int>>& fold_rows,
                const std::vector<std::string>& all_ids, double ridge) {
    CVCell cell;
    cell.p = p;
    cell.with_tau = with_tau;
    cell.folds = static_cast<int>(fold_rows.size());
    const int n = static_cast<int>(all_ids.size());
    cell.ids = all_ids;
    cell.held_out_prob.assign(n, std::numeric_limits<double>::quiet_NaN());
    cell.held_out_label.assign(n, -1);
    cell.predicted.assign(n, -1);

    int scored = 0, wrong = 0;
    for (const auto& fold : fold_rows) {
        std::set<int> held(fold.begin(), fold.end());
        std::vector<std::string> train_ids;
        for (int i = 0; i < n; ++i)
            if (!held.count(i)) train_ids.push_back(all_ids[i]);

        const std::vector<FeatureRow> rows = restrict_p(source(p, train_ids), p);
        if (static_cast<int>(rows.size()) != n)
            throw ConstraintError("cross_validate: feature source changed the subject set");

        std::vector<FeatureRow> train;
        for (int i = 0; i < n; ++i)
            if (!held.count(i)) train.push_back(rows[i]);

        LogisticModel fold_model;
        try {
            fold_model = fit_logistic(train, with_tau, ridge);
        } catch (const SeparationError&) {
            ++cell.flagged_folds;
            continue;
        }
        for (int i : fold) {
            const double prob = predict_prob(fold_model, rows[i]);
            cell.held_out_prob[i] = prob;
            cell.held_out_label[i] = rows[i].label;
            cell.predicted[i] = prob >= 0.5 ? 1 : 0;
            ++scored;
            if (cell.predicted[i] != rows[i].label) ++wrong;
        }
    }
    cell.cmr = scored > 0 ? static_cast<double>(wrong) / scored : 1.0;
    return cell;
}

}  // namespace

CVReport cross_validate(const FeatureSource& source, const std::vector<int>& p_values,
                        bool include_tau, int folds, double ridge, unsigned long long seed) {
    if (p_values.empty()) throw ConstraintError("cross_validate: p_values must be nonempty");

    // subject set and fold partition from the first configuration
    const std::vector<FeatureRow> rows0 = source(p_values.front(), {});
    const int n = static_cast<int>(rows0.size());
    if (n < 2) throw ConstraintError("cross_validate: need at least two subjects");
    std::vector<std::string> all_ids(n);
    for (int i = 0; i < n; ++i) all_ids[i] = rows0[i].id;

    CVReport report;
    report.fold_assignment = make_folds(n, folds, seed);

    for (int p : p_values) {
        if (p > 0)
            report.cells.push_back(
                run_cell(source, p, false, report.fold_assignment, all_ids, ridge));
        if (include_tau)
            report.cells.push_back(
                run_cell(source, p, true, report.fold_assignment, all_ids, ridge));
    }
    return report;
}

std::string cv_report_csv(const CVReport& report) {
    std::ostringstream out;
    out << "p,features,folds,cmr,flagged_folds\n";
    for (const auto& cell : report.cells) {
        const char* features = cell.with_tau ? (cell.p > 0 ? "z+tau" : "tau") : "z";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.10g", cell.cmr);
        out << cell.p << ',' << features << ',' << cell.folds << ',' << buf << ','
            << cell.flagged_folds << '\n';
    }
    return out.str();
}

}  // namespace warpfit
