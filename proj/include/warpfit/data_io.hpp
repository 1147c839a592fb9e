#pragma once

#include <string>

#include "warpfit/dataset.hpp"

namespace warpfit {

// Long CSV with header "id,t,value", one observation per row. Rows are
// grouped by id, sorted by t; exact duplicate (id, t) pairs are rejected.
Dataset load_long_csv(const std::string& path);

// Directory of per-curve CSVs (header "t,value"), ids from file stems.
Dataset load_curve_dir(const std::string& path);

// Dispatches on whether path is a directory.
Dataset load_curves(const std::string& path);

// Labels CSV with header "id,group", group in {upper, lower} (upper = 1).
void load_labels_csv(Dataset& data, const std::string& path);

void save_long_csv(const Dataset& data, const std::string& path);

// JSON bundle with schema "warpfit-dataset-v1" including labels and meta.
void save_dataset_json(const Dataset& data, const std::string& path);
Dataset load_dataset_json(const std::string& path);

}  // namespace warpfit
