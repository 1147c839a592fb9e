#include "warpfit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace warpfit {

void Curve::validate() const {
    if (t.size() != y.size())
        throw ConstraintError("Curve " + id + ": grid and values must have equal length");
    if (t.size() < 1) throw ConstraintError("Curve " + id + ": needs at least one observation");
    for (int j = 0; j < t.size(); ++j) {
        if (!std::isfinite(t(j)) || !std::isfinite(y(j))) {
            std::ostringstream msg;
            msg << "Curve " << id << ": non-finite observation at index " << j;
            throw ConstraintError(msg.str());
        }
        if (j > 0 && !(t(j) > t(j - 1))) {
            std::ostringstream msg;
            msg << "Curve " << id << ": grid not strictly increasing at index " << j << " (t="
                << t(j) << ")";
            throw ConstraintError(msg.str());
        }
    }
}

const Curve* Dataset::find(const std::string& id) const {
    for (const auto& c : curves)
        if (c.id == id) return &c;
    return nullptr;
}

int Dataset::label_of(const std::string& id) const {
    auto it = labels.find(id);
    if (it == labels.end()) throw ConstraintError("Dataset: no label for id " + id);
    return it->second;
}

void Dataset::validate() const {
    std::set<std::string> seen;
    for (const auto& c : curves) {
        c.validate();
        if (!seen.insert(c.id).second)
            throw ConstraintError("Dataset: duplicate curve id " + c.id);
    }
    if (!labels.empty()) {
        for (const auto& c : curves) {
            if (labels.find(c.id) == labels.end())
                throw ConstraintError("Dataset: missing label for id " + c.id);
        }
        for (const auto& [id, lab] : labels) {
            if (seen.find(id) == seen.end())
                throw ConstraintError("Dataset: label for unknown id " + id);
            if (lab != 0 && lab != 1)
                throw ConstraintError("Dataset: label for id " + id + " must be 0 or 1");
        }
    }
}

Dataset truncate(const Dataset& data, double t_min) {
    Dataset out;
    out.labels = data.labels;
    out.meta = data.meta;
    out.meta.truncated_at = t_min;
    for (const auto& c : data.curves) {
        std::vector<double> ts, ys;
        for (int j = 0; j < c.m(); ++j) {
            if (c.t(j) >= t_min) {
                ts.push_back(c.t(j));
                ys.push_back(c.y(j));
            }
        }
        if (ts.empty()) {
            out.meta.removed_empty_ids.push_back(c.id);
            out.labels.erase(c.id);
            continue;
        }
        Curve trimmed;
        trimmed.id = c.id;
        trimmed.t = Eigen::Map<Eigen::VectorXd>(ts.data(), ts.size());
        trimmed.y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
        out.curves.push_back(std::move(trimmed));
    }
    return out;
}

Dataset downsample(const Dataset& data, int m_target) {
    if (m_target < 2) throw ConstraintError("downsample: m_target must be >= 2");
    Dataset out;
    out.labels = data.labels;
    out.meta = data.meta;
    out.meta.downsampled_to = m_target;
    for (const auto& c : data.curves) {
        if (c.m() <= m_target) {
            out.curves.push_back(c);
            continue;
        }
        const int m = c.m();
        std::vector<int> keep(m_target);
        int prev = -1;
        for (int k = 0; k < m_target; ++k) {
            // empirical quantile of the grid at level k/(m_target-1)
            const double pos = static_cast<double>(k) * (m - 1) / (m_target - 1);
            const int base = static_cast<int>(std::floor(pos));
            const double frac = pos - base;
            const double target =
                (base + 1 < m) ? (1.0 - frac) * c.t(base) + frac * c.t(base + 1) : c.t(m - 1);
            // nearest observation, forced strictly past the previous pick
            int lo = prev + 1;
            int best = lo;
            double best_dist = std::abs(c.t(lo) - target);
            for (int j = lo + 1; j < m - (m_target - 1 - k); ++j) {
                const double dist = std::abs(c.t(j) - target);
                if (dist < best_dist) {
                    best = j;
                    best_dist = dist;
                }
            }
            keep[k] = best;
            prev = best;
        }
        Curve reduced;
        reduced.id = c.id;
        reduced.t.resize(m_target);
        reduced.y.resize(m_target);
        for (int k = 0; k < m_target; ++k) {
            reduced.t(k) = c.t(keep[k]);
            reduced.y(k) = c.y(keep[k]);
        }
        out.curves.push_back(std::move(reduced));
    }
    return out;
}

}  // namespace warpfit
