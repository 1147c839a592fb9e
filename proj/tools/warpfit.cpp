// warpfit: registration of sparsely sampled curves by a random-effects
// warping model, with warp-aware logistic discrimination.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "warpfit/cli.hpp"
#include "warpfit/common.hpp"

namespace {

using nlohmann::json;

// flags > config file > defaults: config values preload the bound variables,
// CLI11 then overwrites whatever was given explicitly
json load_config(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc)
            path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0)
            path = arg.substr(9);
    }
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) {
        std::cerr << "warpfit: cannot open config file " << path << "\n";
        std::exit(warpfit::kExitValidation);
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        std::cerr << "warpfit: bad config file " << path << ": " << e.what() << "\n";
        std::exit(warpfit::kExitValidation);
    }
}

template <typename F>
int dispatch(F&& f) {
    try {
        return f();
    } catch (const warpfit::FitError& e) {
        std::cerr << "warpfit: " << e.what() << "\n";
        return warpfit::kExitNumerical;
    } catch (const warpfit::Error& e) {
        std::cerr << "warpfit: " << e.what() << "\n";
        return warpfit::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "warpfit: " << e.what() << "\n";
        return warpfit::kExitNumerical;
    }
}

}  // namespace

int main(int argc, char** argv) {
    const json cfg = load_config(argc, argv);
    auto cfgd = [&](const char* key, double fallback) { return cfg.value(key, fallback); };
    auto cfgi = [&](const char* key, int fallback) { return cfg.value(key, fallback); };
    auto cfgs = [&](const char* key, std::string fallback) {
        return cfg.value(key, std::move(fallback));
    };

    CLI::App app{"Curve registration by monotone warps with logistic discrimination"};
    app.require_subcommand(1);
    std::string config_path;  // consumed by load_config; registered so parsing accepts it

    warpfit::LayoutOpts layout;
    layout.degree = cfgi("degree", layout.degree);
    layout.n_interior_knots = cfgi("knots", layout.n_interior_knots);
    if (cfg.contains("tau0")) layout.tau0 = cfg["tau0"].get<std::vector<double>>();
    std::vector<double> interval = {cfgd("interval_lo", layout.interval_lo),
                                    cfgd("interval_hi", layout.interval_hi)};

    auto add_layout = [&](CLI::App* sub) {
        sub->add_option("--degree", layout.degree, "spline degree");
        sub->add_option("--knots", layout.n_interior_knots, "number of interior knots");
        sub->add_option("--tau0", layout.tau0, "warp knots, comma separated")->delimiter(',');
        sub->add_option("--interval", interval, "domain interval lo,hi")
            ->delimiter(',')
            ->expected(2);
    };

    // simulate
    warpfit::SimulateOpts sim;
    unsigned long long sim_seed = 0;
    auto* csim = app.add_subcommand("simulate", "draw a synthetic dataset from a spec");
    csim->add_option("--spec", sim.spec_path, "simulation spec JSON")->required();
    csim->add_option("--out", sim.out_dir, "output directory")->required();
    auto* sim_seed_opt = csim->add_option("--seed", sim_seed, "override the spec seed");
    csim->add_option("--config", config_path, "JSON config file");

    // fit
    warpfit::FitOpts fit;
    fit.p = cfgi("p", fit.p);
    fit.m_target = cfgi("m_target", fit.m_target);
    fit.max_em_iters = cfgi("max_em_iters", fit.max_em_iters);
    fit.em_tol = cfgd("em_tol", fit.em_tol);
    fit.quad_points = cfgi("quad_points", fit.quad_points);
    fit.estep_mode = cfgs("estep_mode", fit.estep_mode);
    fit.threads = cfgi("threads", fit.threads);
    auto* cfit = app.add_subcommand("fit", "fit the random-effects registration model");
    cfit->add_option("--data", fit.data_path, "curves (long CSV or directory)")->required();
    cfit->add_option("--labels", fit.labels_path, "labels CSV (optional)");
    cfit->add_option("--out", fit.out_dir, "output directory")->required();
    cfit->add_option("--p", fit.p, "number of amplitude components");
    cfit->add_option("--m-target", fit.m_target, "down-sample target (0 = off)");
    cfit->add_flag("--no-truncate", fit.no_truncate, "skip truncation at the interval start");
    cfit->add_option("--max-em-iters", fit.max_em_iters, "EM iteration cap");
    cfit->add_option("--em-tol", fit.em_tol, "relative log-likelihood tolerance");
    cfit->add_option("--quad-points", fit.quad_points, "Gauss-Hermite nodes per dimension");
    cfit->add_option("--estep-mode", fit.estep_mode, "laplace_ghq or map_hard");
    cfit->add_option("--threads", fit.threads, "E-step worker threads");
    cfit->add_option("--seed", fit.seed, "seed recorded in the manifest");
    cfit->add_option("--config", config_path, "JSON config file");
    add_layout(cfit);

    // register
    warpfit::RegisterOpts reg;
    reg.m_target = cfgi("m_target", 0);
    auto* creg = app.add_subcommand("register", "align curves with fitted warps");
    creg->add_option("--data", reg.data_path, "curves (long CSV or directory)")->required();
    creg->add_option("--model", reg.model_path, "model JSON from a fit")->required();
    creg->add_option("--effects", reg.effects_path, "effects CSV (recomputed when absent)");
    creg->add_option("--out", reg.out_dir, "output directory")->required();
    creg->add_option("--m-target", reg.m_target, "down-sample target (0 = off)");
    creg->add_flag("--no-truncate", reg.no_truncate, "skip truncation at the interval start");
    creg->add_option("--config", config_path, "JSON config file");

    // cv
    warpfit::CvOpts cv;
    cv.folds = cfgi("folds", cv.folds);
    cv.ridge = cfgd("ridge", cv.ridge);
    cv.m_target = cfgi("m_target", cv.m_target);
    auto* ccv = app.add_subcommand("cv", "cross-validated discrimination table");
    ccv->add_option("--data", cv.data_path, "curves (long CSV or directory)")->required();
    ccv->add_option("--labels", cv.labels_path, "labels CSV")->required();
    ccv->add_option("--model", cv.model_dirs, "fit output directory (repeat per p)")
        ->required()
        ->take_all();
    ccv->add_option("--out", cv.out_dir, "output directory")->required();
    ccv->add_option("--folds", cv.folds, "fold count (0 = leave-one-out)");
    ccv->add_option("--ridge", cv.ridge, "ridge penalty on slopes");
    ccv->add_option("--seed", cv.seed, "seed for the fold shuffle");
    ccv->add_flag("--pipeline-cv", cv.pipeline, "refit registration inside every fold");
    ccv->add_option("--m-target", cv.m_target, "down-sample target (0 = off)");
    ccv->add_flag("--no-truncate", cv.no_truncate, "skip truncation at the interval start");
    ccv->add_option("--config", config_path, "JSON config file");

    // plot
    warpfit::PlotOpts plot;
    auto* cplot = app.add_subcommand("plot", "emit plot CSV + SVG artifacts");
    cplot->add_option("--kind", plot.kind, "curves|registered|components|warps|beta")->required();
    cplot->add_option("--data", plot.data_path, "curves (long CSV or directory)");
    cplot->add_option("--labels", plot.labels_path, "labels CSV");
    cplot->add_option("--model", plot.model_path, "model JSON");
    cplot->add_option("--effects", plot.effects_path, "effects CSV");
    cplot->add_option("--logistic", plot.logistic_path, "logistic fit JSON (for beta)");
    cplot->add_option("--out", plot.out_dir, "output directory")->required();
    cplot->add_option("--config", config_path, "JSON config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? warpfit::kExitOk : warpfit::kExitValidation;
    }

    fit.layout = layout;
    fit.layout.interval_lo = interval[0];
    fit.layout.interval_hi = interval[1];

    if (csim->parsed()) {
        if (sim_seed_opt->count() > 0) sim.seed_override = sim_seed;
        return dispatch([&] { return warpfit::run_simulate(sim); });
    }
    if (cfit->parsed()) return dispatch([&] { return warpfit::run_fit(fit); });
    if (creg->parsed()) return dispatch([&] { return warpfit::run_register(reg); });
    if (ccv->parsed()) return dispatch([&] { return warpfit::run_cv(cv); });
    if (cplot->parsed()) return dispatch([&] { return warpfit::run_plot(plot); });
    return warpfit::kExitValidation;
}
