#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "warpfit/common.hpp"

namespace warpfit {

// One subject: observation grid t (strictly increasing) and values y.
// Grids may have different lengths across subjects; short curves are kept
// short rather than imputed.
struct Curve {
    std::string id;
    Eigen::VectorXd t;
    Eigen::VectorXd y;

    int m() const { return static_cast<int>(t.size()); }
    void validate() const;
};

// Provenance recorded alongside a dataset.
struct DatasetMeta {
    std::vector<std::string> sources;
    std::optional<double> truncated_at;
    std::optional<int> downsampled_to;
    std::optional<unsigned long long> seed;
    std::vector<std::string> removed_empty_ids;
};

struct Dataset {
    std::vector<Curve> curves;
    // binary group label per id (1 = "upper"); empty when unlabeled
    std::map<std::string, int> labels;
    DatasetMeta meta;

    int n() const { return static_cast<int>(curves.size()); }
    bool has_labels() const { return !labels.empty(); }
    const Curve* find(const std::string& id) const;
    int label_of(const std::string& id) const;

    // unique ids; labels, when present, cover all ids; curves valid
    void validate() const;
};

// Drops observations with t < t_min. Curves left empty are removed and
// recorded in meta.removed_empty_ids.
Dataset truncate(const Dataset& data, double t_min);

// Keeps the observations nearest to m_target equispaced quantile positions of
// each curve's own grid (endpoints always kept). Curves with m <= m_target
// pass through untouched.
Dataset downsample(const Dataset& data, int m_target);

}  // namespace warpfit
