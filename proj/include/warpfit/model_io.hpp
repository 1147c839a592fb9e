#pragma once

#include <string>
#include <vector>

#include "warpfit/em.hpp"
#include "warpfit/model.hpp"

namespace warpfit {

// Versioned model document, schema "warpfit-model-v1". Numbers round-trip at
// full precision.
void save_model_json(const TemplateModel& model, const FitDiagnostics& diagnostics,
                     const FitConfig& config, const std::string& path);

struct LoadedModel {
    TemplateModel model;
    FitDiagnostics diagnostics;
    FitConfig config;
};

LoadedModel load_model_json(const std::string& path);

// Effects CSV: id, flagged, loglik, theta_1.., tau_1.., z_1..
void save_effects_csv(const std::vector<SubjectEffects>& effects, const std::string& path);
std::vector<SubjectEffects> load_effects_csv(const std::string& path);

// Per-iteration trace CSV: iter, loglik.
void save_trace_csv(const std::vector<double>& trace, const std::string& path);
std::vector<double> load_trace_csv(const std::string& path);

}  // namespace warpfit
