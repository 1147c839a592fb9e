#include "warpfit/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "warpfit/data_io.hpp"
#include "warpfit/discriminate.hpp"
#include "warpfit/em.hpp"
#include "warpfit/model_io.hpp"
#include "warpfit/plot.hpp"
#include "warpfit/simulate.hpp"

namespace warpfit {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class Manifest {
public:
    Manifest(std::string command, std::string out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)), start_(clock_t::now()) {
        fs::create_directories(out_dir_);
    }

    void set_config(json config) { config_ = std::move(config); }
    void add_input(const std::string& path) {
        if (!path.empty()) inputs_.push_back(path);
    }
    void add_output(const std::string& name) { outputs_.push_back(name); }
    void set_seed(unsigned long long seed) { seed_ = seed; }

    std::string path(const std::string& name) const { return (fs::path(out_dir_) / name).string(); }

    void write() const {
        json j;
        j["schema"] = "warpfit-manifest-v1";
        j["command"] = command_;
        j["version"] = kVersion;
        j["config"] = config_;
        j["inputs"] = inputs_;
        j["outputs"] = outputs_;
        if (seed_) j["seed"] = *seed_;
        j["duration_seconds"] =
            std::chrono::duration<double>(clock_t::now() - start_).count();
        std::ofstream out(path("manifest.json"));
        if (!out) throw IoError("cannot write manifest in " + out_dir_);
        out << j.dump(2) << '\n';
    }

private:
    using clock_t = std::chrono::steady_clock;
    std::string command_, out_dir_;
    json config_;
    std::vector<std::string> inputs_, outputs_;
    std::optional<unsigned long long> seed_;
    clock_t::time_point start_;
};

Eigen::VectorXd vec_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

Eigen::MatrixXd mat_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    const int cols = static_cast<int>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
    return m;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

BSplineBasis basis_from_json(const json& jb) {
    const auto interval = jb.at("interval").get<std::vector<double>>();
    if (interval.size() != 2) throw IoError("basis.interval must have two entries");
    const Interval iv{interval[0], interval[1]};
    const int degree = jb.value("degree", 3);
    if (jb.contains("interior_knots"))
        return BSplineBasis(degree, iv, jb["interior_knots"].get<std::vector<double>>());
    return BSplineBasis::equispaced(degree, iv, jb.value("n_interior", 10));
}

SimSpec sim_spec_from_json(const json& j) {
    SimSpec spec;
    spec.n = j.value("n", spec.n);
    spec.m = j.value("m", spec.m);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("grid")) {
        const auto& jg = j["grid"];
        const std::string policy = jg.value("policy", "common_equispaced");
        if (policy == "common_equispaced")
            spec.grid_policy = SimSpec::GridPolicy::common_equispaced;
        else if (policy == "random_incomplete")
            spec.grid_policy = SimSpec::GridPolicy::random_incomplete;
        else
            throw IoError("unknown grid policy '" + policy + "'");
        spec.min_span = jg.value("min_span", spec.min_span);
    }

    const auto& jm = j.at("model");
    const BSplineBasis basis = basis_from_json(jm.at("basis"));
    const Eigen::VectorXd tau0 = vec_from_json(jm.at("tau0"));
    TemplateModel model{basis,
                        vec_from_json(jm.at("a")),
                        jm.contains("C") ? mat_from_json(jm["C"])
                                         : Eigen::MatrixXd::Zero(basis.size(), 0),
                        jm.contains("lambda") ? vec_from_json(jm["lambda"]) : Eigen::VectorXd(0),
                        jm.value("sigma2", 0.0),
                        tau0,
                        jupp_forward(tau0, basis.interval()),
                        jm.contains("Sigma")
                            ? mat_from_json(jm["Sigma"])
                            : Eigen::MatrixXd::Zero(tau0.size(), tau0.size()),
                        basis.gram()};
    if (model.C.size() == 0 && model.p() > 0)
        throw IoError("sim spec: lambda given without C");
    spec.model = std::move(model);

    spec.label_b = Eigen::VectorXd::Zero(spec.model.p());
    if (j.contains("labels")) {
        const auto& jl = j["labels"];
        spec.label_alpha = jl.value("alpha", 0.0);
        if (jl.contains("b")) spec.label_b = vec_from_json(jl["b"]);
        if (jl.contains("d")) spec.label_d = vec_from_json(jl["d"]);
    }
    return spec;
}

void save_labels_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "id,group\n";
    for (const auto& c : data.curves)
        out << c.id << ',' << (data.label_of(c.id) == 1 ? "upper" : "lower") << '\n';
}

Dataset load_prepped(const std::string& data_path, const std::string& labels_path,
                     const Interval& interval, bool no_truncate, int m_target) {
    Dataset data = load_curves(data_path);
    if (!labels_path.empty()) load_labels_csv(data, labels_path);
    if (!no_truncate) data = truncate(data, interval.lo);
    if (m_target > 0) data = downsample(data, m_target);
    return data;
}

json logistic_to_json(const LogisticModel& m) {
    json j;
    j["alpha"] = m.alpha;
    j["alpha_raw"] = m.alpha_raw();
    j["b"] = std::vector<double>(m.b.data(), m.b.data() + m.b.size());
    j["d"] = std::vector<double>(m.d.data(), m.d.data() + m.d.size());
    j["tau_center"] =
        std::vector<double>(m.tau_center.data(), m.tau_center.data() + m.tau_center.size());
    j["ridge"] = m.ridge;
    return j;
}

LogisticModel logistic_from_json(const json& j) {
    LogisticModel m;
    m.alpha = j.at("alpha").get<double>();
    m.b = vec_from_json(j.at("b"));
    m.d = vec_from_json(j.at("d"));
    m.tau_center = vec_from_json(j.at("tau_center"));
    m.ridge = j.value("ridge", 0.0);
    return m;
}

std::map<std::string, int> label_groups(const Dataset& data) {
    std::map<std::string, int> groups;
    for (const auto& c : data.curves)
        groups[c.id] = data.has_labels() ? data.label_of(c.id) : 0;
    return groups;
}

FitConfig fit_config_from(const FitOpts& opts) {
    FitConfig config;
    config.p = opts.p;
    config.max_em_iters = opts.max_em_iters;
    config.em_tol = opts.em_tol;
    config.quad_points_per_dim = opts.quad_points;
    if (opts.estep_mode == "map_hard")
        config.estep_mode = FitConfig::EStepMode::map_hard;
    else if (opts.estep_mode == "laplace_ghq")
        config.estep_mode = FitConfig::EStepMode::laplace_ghq;
    else
        throw ConstraintError("estep_mode must be laplace_ghq or map_hard");
    config.seed = opts.seed;
    config.threads = opts.threads;
    return config;
}

}  // namespace

int run_simulate(const SimulateOpts& opts) {
    Manifest manifest("simulate", opts.out_dir);
    manifest.add_input(opts.spec_path);

    json jspec = load_json_file(opts.spec_path);
    SimSpec spec = sim_spec_from_json(jspec);
    if (opts.seed_override) spec.seed = *opts.seed_override;
    manifest.set_seed(spec.seed);
    jspec["seed"] = spec.seed;
    manifest.set_config(jspec);

    const auto [data, truth] = simulate(spec);

    save_long_csv(data, manifest.path("dataset.csv"));
    save_dataset_json(data, manifest.path("dataset.json"));
    save_labels_csv(data, manifest.path("labels.csv"));

    json jtruth;
    jtruth["schema"] = "warpfit-truth-v1";
    jtruth["subjects"] = json::array();
    for (const auto& s : truth.subjects) {
        json js;
        js["id"] = s.id;
        js["theta"] = std::vector<double>(s.theta.data(), s.theta.data() + s.theta.size());
        js["tau"] = std::vector<double>(s.tau.data(), s.tau.data() + s.tau.size());
        js["z"] = std::vector<double>(s.z.data(), s.z.data() + s.z.size());
        js["prob"] = s.prob;
        js["label"] = s.label;
        jtruth["subjects"].push_back(std::move(js));
    }
    std::ofstream out(manifest.path("truth.json"));
    out << jtruth.dump(2) << '\n';

    for (const char* name : {"dataset.csv", "dataset.json", "labels.csv", "truth.json"})
        manifest.add_output(name);
    manifest.write();
    return kExitOk;
}

int run_fit(const FitOpts& opts) {
    Manifest manifest("fit", opts.out_dir);
    manifest.add_input(opts.data_path);
    manifest.add_input(opts.labels_path);
    manifest.set_seed(opts.seed);

    const Interval interval{opts.layout.interval_lo, opts.layout.interval_hi};
    const BSplineBasis basis =
        BSplineBasis::equispaced(opts.layout.degree, interval, opts.layout.n_interior_knots);
    const Eigen::VectorXd tau0 = Eigen::Map<const Eigen::VectorXd>(
        opts.layout.tau0.data(), static_cast<Eigen::Index>(opts.layout.tau0.size()));

    const Dataset data = load_prepped(opts.data_path, opts.labels_path, interval,
                                      opts.no_truncate, opts.m_target);
    const FitConfig config = fit_config_from(opts);

    json jconfig;
    jconfig["p"] = opts.p;
    jconfig["m_target"] = opts.m_target;
    jconfig["degree"] = opts.layout.degree;
    jconfig["n_interior_knots"] = opts.layout.n_interior_knots;
    jconfig["interval"] = {interval.lo, interval.hi};
    jconfig["tau0"] = opts.layout.tau0;
    jconfig["max_em_iters"] = opts.max_em_iters;
    jconfig["em_tol"] = opts.em_tol;
    jconfig["quad_points"] = opts.quad_points;
    jconfig["estep_mode"] = opts.estep_mode;
    jconfig["threads"] = opts.threads;
    manifest.set_config(jconfig);

    const FitResult fit = fit_em(data, basis, tau0, config);

    save_model_json(fit.model, fit.diagnostics, config, manifest.path("model.json"));
    save_trace_csv(fit.trace, manifest.path("trace.csv"));
    save_effects_csv(fit.effects, manifest.path("effects.csv"));
    for (const char* name : {"model.json", "trace.csv", "effects.csv"})
        manifest.add_output(name);
    manifest.write();

    std::cout << "fit: " << fit.diagnostics.iterations << " iterations, log-likelihood "
              << fit.diagnostics.final_loglik
              << (fit.diagnostics.converged ? " (converged)" : " (iteration cap reached)")
              << ", flagged subjects " << fit.diagnostics.n_flagged << "\n";
    if (fit.diagnostics.ridge_events > 0)
        std::cerr << "fit: normal equations were singular in " << fit.diagnostics.ridge_events
                  << " M-step(s); ridge fallback applied\n";
    return kExitOk;
}

int run_register(const RegisterOpts& opts) {
    Manifest manifest("register", opts.out_dir);
    manifest.add_input(opts.data_path);
    manifest.add_input(opts.model_path);
    manifest.add_input(opts.effects_path);

    const LoadedModel loaded = load_model_json(opts.model_path);
    const Dataset data = load_prepped(opts.data_path, "", loaded.model.basis.interval(),
                                      opts.no_truncate, opts.m_target);

    std::vector<SubjectEffects> effects;
    if (!opts.effects_path.empty()) {
        effects = load_effects_csv(opts.effects_path);
    } else {
        for (const auto& c : data.curves)
            effects.push_back(e_step(c, loaded.model, loaded.config).effects);
    }

    Dataset registered = data;
    for (auto& curve : registered.curves) {
        const SubjectEffects* eff = nullptr;
        for (const auto& e : effects)
            if (e.id == curve.id) eff = &e;
        if (!eff) throw ConstraintError("register: no effects for id " + curve.id);
        curve = register_curve(curve, *eff, loaded.model);
    }
    save_long_csv(registered, manifest.path("registered.csv"));
    if (opts.effects_path.empty()) save_effects_csv(effects, manifest.path("effects.csv"));

    json jconfig;
    jconfig["m_target"] = opts.m_target;
    manifest.set_config(jconfig);
    manifest.add_output("registered.csv");
    manifest.write();
    return kExitOk;
}

namespace {

std::vector<FeatureRow> rows_from_effects(const Dataset& data,
                                          const std::vector<SubjectEffects>& effects) {
    std::vector<FeatureRow> rows;
    for (const auto& c : data.curves) {
        const SubjectEffects* eff = nullptr;
        for (const auto& e : effects)
            if (e.id == c.id) eff = &e;
        if (!eff) throw ConstraintError("cv: effects missing subject " + c.id);
        FeatureRow row;
        row.id = c.id;
        row.z = eff->z_hat;
        row.tau = eff->tau_hat;
        row.label = data.label_of(c.id);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

int run_cv(const CvOpts& opts) {
    Manifest manifest("cv", opts.out_dir);
    manifest.add_input(opts.data_path);
    manifest.add_input(opts.labels_path);
    manifest.set_seed(opts.seed);
    if (opts.model_dirs.empty()) throw ConstraintError("cv: at least one --model directory needed");
    if (opts.labels_path.empty()) throw ConstraintError("cv: labels are required");

    struct PerP {
        LoadedModel loaded;
        std::vector<FeatureRow> rows;
    };
    std::map<int, PerP> models;

    Dataset data;
    bool data_loaded = false;
    for (const auto& dir : opts.model_dirs) {
        const std::string model_path = (fs::path(dir) / "model.json").string();
        if (!fs::exists(model_path))
            throw IoError("cv: " + model_path + " not found (run `warpfit fit` first)");
        LoadedModel loaded = load_model_json(model_path);
        if (!data_loaded) {
            data = load_prepped(opts.data_path, opts.labels_path,
                                loaded.model.basis.interval(), opts.no_truncate, opts.m_target);
            data_loaded = true;
        }
        const std::string effects_path = (fs::path(dir) / "effects.csv").string();
        if (!fs::exists(effects_path))
            throw IoError("cv: " + effects_path + " not found (run `warpfit fit` first)");
        const auto effects = load_effects_csv(effects_path);
        const int p = loaded.model.p();
        models.emplace(p, PerP{std::move(loaded), rows_from_effects(data, effects)});
    }

    std::vector<int> p_values;
    for (const auto& [p, unused] : models) p_values.push_back(p);

    FeatureSource source;
    if (!opts.pipeline) {
        std::vector<std::pair<int, std::vector<FeatureRow>>> per_p;
        for (const auto& [p, entry] : models) per_p.emplace_back(p, entry.rows);
        source = precomputed_features(std::move(per_p));
    } else {
        // full-pipeline protocol: refit the registration model on the training
        // subjects of every fold, then rebuild all features under that model
        source = [&models, &data](int p, const std::vector<std::string>& train_ids) {
            const PerP& entry = models.at(p);
            if (train_ids.empty()) return entry.rows;
            Dataset train;
            train.meta = data.meta;
            std::set<std::string> keep(train_ids.begin(), train_ids.end());
            for (const auto& c : data.curves)
                if (keep.count(c.id)) train.curves.push_back(c);
            const FitResult fold_fit = fit_em(train, entry.loaded.model.basis,
                                              entry.loaded.model.tau0, entry.loaded.config);
            std::vector<SubjectEffects> all_effects;
            for (const auto& c : data.curves)
                all_effects.push_back(e_step(c, fold_fit.model, entry.loaded.config).effects);
            return rows_from_effects(data, all_effects);
        };
    }

    const CVReport report = cross_validate(source, p_values, true, opts.folds, opts.ridge,
                                           opts.seed);

    std::ofstream csv(manifest.path("cv.csv"));
    csv << cv_report_csv(report);
    csv.close();
    manifest.add_output("cv.csv");

    // full-data logistic fits, one per table cell, reused by `plot --kind beta`
    json jcells = json::array();
    for (const auto& cell : report.cells) {
        json jc;
        jc["p"] = cell.p;
        jc["features"] = cell.with_tau ? (cell.p > 0 ? "z+tau" : "tau") : "z";
        jc["folds"] = cell.folds;
        jc["cmr"] = cell.cmr;
        jc["flagged_folds"] = cell.flagged_folds;
        jc["subjects"] = json::array();
        for (size_t i = 0; i < cell.ids.size(); ++i) {
            json js;
            js["id"] = cell.ids[i];
            js["label"] = cell.held_out_label[i];
            js["prob"] = cell.held_out_prob[i];
            js["predicted"] = cell.predicted[i];
            jc["subjects"].push_back(std::move(js));
        }
        try {
            const LogisticModel full =
                fit_logistic(models.at(cell.p).rows, cell.with_tau, opts.ridge);
            jc["full_data_fit"] = logistic_to_json(full);
            const std::string name = "logistic_p" + std::to_string(cell.p) +
                                     (cell.with_tau ? "_with_tau.json" : "_without_tau.json");
            std::ofstream lout(manifest.path(name));
            lout << jc["full_data_fit"].dump(2) << '\n';
            manifest.add_output(name);
        } catch (const SeparationError& e) {
            jc["full_data_fit"] = nullptr;
            jc["full_data_error"] = e.what();
        }
        jcells.push_back(std::move(jc));
    }
    json jdetails;
    jdetails["schema"] = "warpfit-cv-v1";
    jdetails["folds"] = report.fold_assignment;
    jdetails["cells"] = std::move(jcells);
    std::ofstream jout(manifest.path("cv_details.json"));
    jout << jdetails.dump(2) << '\n';
    manifest.add_output("cv_details.json");

    json jconfig;
    jconfig["folds"] = opts.folds;
    jconfig["ridge"] = opts.ridge;
    jconfig["pipeline"] = opts.pipeline;
    jconfig["m_target"] = opts.m_target;
    manifest.set_config(jconfig);
    manifest.write();

    std::cout << cv_report_csv(report);
    return kExitOk;
}

int run_plot(const PlotOpts& opts) {
    Manifest manifest("plot", opts.out_dir);
    json jconfig;
    jconfig["kind"] = opts.kind;
    manifest.set_config(jconfig);
    for (const auto& path : {opts.data_path, opts.model_path, opts.effects_path,
                             opts.logistic_path, opts.labels_path})
        manifest.add_input(path);

    PlotData data;
    std::map<std::string, int> groups;
    std::string title;

    if (opts.kind == "curves" || opts.kind == "registered") {
        if (opts.data_path.empty()) throw ConstraintError("plot: --data required");
        Dataset ds = load_curves(opts.data_path);
        if (!opts.labels_path.empty()) load_labels_csv(ds, opts.labels_path);
        groups = label_groups(ds);
        if (opts.kind == "curves") {
            data = plot_curves_data(ds);
            title = "Observed curves";
        } else {
            if (opts.model_path.empty() || opts.effects_path.empty())
                throw ConstraintError("plot registered: --model and --effects required");
            const LoadedModel loaded = load_model_json(opts.model_path);
            data = plot_registered_data(ds, load_effects_csv(opts.effects_path), loaded.model);
            title = "Registered curves";
        }
    } else if (opts.kind == "components") {
        if (opts.model_path.empty()) throw ConstraintError("plot components: --model required");
        const LoadedModel loaded = load_model_json(opts.model_path);
        data = plot_components_data(loaded.model);
        title = "Mean and principal components";
    } else if (opts.kind == "warps") {
        if (opts.model_path.empty() || opts.effects_path.empty())
            throw ConstraintError("plot warps: --model and --effects required");
        const LoadedModel loaded = load_model_json(opts.model_path);
        data = plot_warps_data(loaded.model, load_effects_csv(opts.effects_path));
        title = "Warping functions";
    } else if (opts.kind == "beta") {
        if (opts.model_path.empty() || opts.logistic_path.empty())
            throw ConstraintError("plot beta: --model and --logistic required");
        const LoadedModel loaded = load_model_json(opts.model_path);
        data = plot_beta_data(loaded.model, logistic_from_json(load_json_file(opts.logistic_path)));
        title = "Discriminant weight function";
    } else {
        throw ConstraintError("plot: unknown kind '" + opts.kind +
                              "' (curves|registered|components|warps|beta)");
    }

    const std::string csv_name = opts.kind + ".csv";
    const std::string svg_name = opts.kind + ".svg";
    std::ofstream csv(manifest.path(csv_name));
    csv << data.to_csv();
    csv.close();
    render_plot(data, title, groups, manifest.path(svg_name));
    manifest.add_output(csv_name);
    manifest.add_output(svg_name);
    manifest.write();
    return kExitOk;
}

}  // namespace warpfit
