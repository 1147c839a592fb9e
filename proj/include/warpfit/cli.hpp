#pragma once

#include <optional>
#include <string>
#include <vector>

namespace warpfit {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

// Default model layout for the curvature analysis; every field can be overridden by config file or
// command-line flags (flags win).
struct LayoutOpts {
    double interval_lo = -80.0;
    double interval_hi = 0.0;
    int degree = 3;
    int n_interior_knots = 10;
    std::vector<double> tau0 = {-60.0, -40.0, -20.0};
};

struct FitOpts {
    std::string data_path;
    std::string labels_path;  // optional
    std::string out_dir;
    LayoutOpts layout;
    int p = 2;
    int m_target = 30;        // 0 disables down-sampling
    bool no_truncate = false; // keep observations below the interval
    int max_em_iters = 200;
    double em_tol = 1e-6;
    int quad_points = 5;
    std::string estep_mode = "laplace_ghq";
    int threads = 1;
    unsigned long long seed = 0;
};

struct SimulateOpts {
    std::string spec_path;
    std::string out_dir;
    std::optional<unsigned long long> seed_override;
};

struct RegisterOpts {
    std::string data_path;
    std::string model_path;
    std::string effects_path;  // optional: recomputed when absent
    std::string out_dir;
    int m_target = 0;
    bool no_truncate = false;
};

struct CvOpts {
    std::string data_path;
    std::string labels_path;
    std::vector<std::string> model_dirs;  // each holds model.json + effects.csv
    std::string out_dir;
    int folds = 0;  // 0 = leave-one-out
    double ridge = 1e-6;
    unsigned long long seed = 0;
    bool pipeline = false;  // refit registration inside every fold
    int m_target = 30;
    bool no_truncate = false;
};

struct PlotOpts {
    std::string kind;  // curves | registered | components | warps | beta
    std::string data_path;
    std::string labels_path;
    std::string model_path;
    std::string effects_path;
    std::string logistic_path;
    std::string out_dir;
};

int run_simulate(const SimulateOpts& opts);
int run_fit(const FitOpts& opts);
int run_register(const RegisterOpts& opts);
int run_cv(const CvOpts& opts);
int run_plot(const PlotOpts& opts);

}  // namespace warpfit
