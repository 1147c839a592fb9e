#include "warpfit/model_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace warpfit {

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd mat_from_json(const json& j, int cols_hint) {
    const int rows = static_cast<int>(j.size());
    if (rows == 0) return Eigen::MatrixXd(0, cols_hint);
    const int cols = static_cast<int>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
    return m;
}

const char* mode_name(FitConfig::EStepMode mode) {
    return mode == FitConfig::EStepMode::map_hard ? "map_hard" : "laplace_ghq";
}

FitConfig::EStepMode mode_from_name(const std::string& name) {
    if (name == "map_hard") return FitConfig::EStepMode::map_hard;
    if (name == "laplace_ghq") return FitConfig::EStepMode::laplace_ghq;
    throw IoError("unknown estep_mode '" + name + "'");
}

json config_to_json(const FitConfig& config) {
    json j;
    j["p"] = config.p;
    j["max_em_iters"] = config.max_em_iters;
    j["em_tol"] = config.em_tol;
    j["quad_points_per_dim"] = config.quad_points_per_dim;
    j["estep_mode"] = mode_name(config.estep_mode);
    j["seed"] = config.seed;
    j["ridge"] = config.ridge;
    j["threads"] = config.threads;
    return j;
}

FitConfig config_from_json(const json& j) {
    FitConfig config;
    config.p = j.value("p", config.p);
    config.max_em_iters = j.value("max_em_iters", config.max_em_iters);
    config.em_tol = j.value("em_tol", config.em_tol);
    config.quad_points_per_dim = j.value("quad_points_per_dim", config.quad_points_per_dim);
    if (j.contains("estep_mode")) config.estep_mode = mode_from_name(j["estep_mode"]);
    config.seed = j.value("seed", config.seed);
    config.ridge = j.value("ridge", config.ridge);
    config.threads = j.value("threads", config.threads);
    return config;
}

}  // namespace

void save_model_json(const TemplateModel& model, const FitDiagnostics& diagnostics,
                     const FitConfig& config, const std::string& path) {
    json j;
    j["schema"] = "warpfit-model-v1";
    j["basis"] = {{"degree", model.basis.degree()},
                  {"interval", {model.basis.interval().lo, model.basis.interval().hi}},
                  {"interior_knots", model.basis.interior_knots()}};
    j["p"] = model.p();
    j["q"] = model.q();
    j["r"] = model.r();
    j["a"] = vec_to_json(model.a);
    j["C"] = mat_to_json(model.C);
    j["lambda"] = vec_to_json(model.lambda);
    j["sigma2"] = model.sigma2;
    j["tau0"] = vec_to_json(model.tau0);
    j["theta0"] = vec_to_json(model.theta0);
    j["Sigma"] = mat_to_json(model.Sigma);
    j["fit"] = {{"iterations", diagnostics.iterations},
                {"converged", diagnostics.converged},
                {"final_loglik", diagnostics.final_loglik},
                {"n_flagged", diagnostics.n_flagged},
                {"flagged_ids", diagnostics.flagged_ids},
                {"ridge_events", diagnostics.ridge_events},
                {"config", config_to_json(config)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

LoadedModel load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    if (j.value("schema", "") != "warpfit-model-v1")
        throw IoError(path + ": expected schema warpfit-model-v1");

    const auto& jb = j.at("basis");
    const auto interval = jb.at("interval").get<std::vector<double>>();
    if (interval.size() != 2) throw IoError(path + ": basis.interval must have two entries");
    BSplineBasis basis(jb.at("degree").get<int>(), Interval{interval[0], interval[1]},
                       jb.at("interior_knots").get<std::vector<double>>());

    LoadedModel out{TemplateModel{basis,
                                  vec_from_json(j.at("a")),
                                  mat_from_json(j.at("C"), 0),
                                  vec_from_json(j.at("lambda")),
                                  j.at("sigma2").get<double>(),
                                  vec_from_json(j.at("tau0")),
                                  vec_from_json(j.at("theta0")),
                                  mat_from_json(j.at("Sigma"), 0),
                                  basis.gram()},
                    FitDiagnostics{},
                    FitConfig{}};
    if (out.model.C.size() == 0)
        out.model.C = Eigen::MatrixXd::Zero(basis.size(), 0);
    if (j.contains("fit")) {
        const auto& jf = j["fit"];
        out.diagnostics.iterations = jf.value("iterations", 0);
        out.diagnostics.converged = jf.value("converged", false);
        out.diagnostics.final_loglik = jf.value("final_loglik", 0.0);
        out.diagnostics.n_flagged = jf.value("n_flagged", 0);
        if (jf.contains("flagged_ids"))
            out.diagnostics.flagged_ids = jf["flagged_ids"].get<std::vector<std::string>>();
        out.diagnostics.ridge_events = jf.value("ridge_events", 0);
        if (jf.contains("config")) out.config = config_from_json(jf["config"]);
    }
    out.model.validate();
    return out;
}

void save_effects_csv(const std::vector<SubjectEffects>& effects, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    const int r = effects.empty() ? 0 : static_cast<int>(effects.front().theta_hat.size());
    const int p = effects.empty() ? 0 : static_cast<int>(effects.front().z_hat.size());
    out << "id,flagged,loglik";
    for (int k = 1; k <= r; ++k) out << ",theta_" << k;
    for (int k = 1; k <= r; ++k) out << ",tau_" << k;
    for (int k = 1; k <= p; ++k) out << ",z_" << k;
    out << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), ",%.17g", v);
        out << buf;
    };
    for (const auto& e : effects) {
        out << e.id << ',' << (e.flagged ? 1 : 0);
        put(e.loglik_contrib);
        for (int k = 0; k < r; ++k) put(e.theta_hat(k));
        for (int k = 0; k < r; ++k) put(e.tau_hat(k));
        for (int k = 0; k < p; ++k) put(e.z_hat(k));
        out << '\n';
    }
}

std::vector<SubjectEffects> load_effects_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    std::stringstream header(line);
    std::string col;
    int r = 0, p = 0;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) {
        if (!col.empty() && col.back() == '\r') col.pop_back();
        cols.push_back(col);
        if (col.rfind("theta_", 0) == 0) ++r;
        if (col.rfind("z_", 0) == 0) ++p;
    }
    if (cols.size() < 3 || cols[0] != "id" || cols[1] != "flagged" || cols[2] != "loglik")
        throw IoError(path + ": unexpected effects header");

    std::vector<SubjectEffects> effects;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::vector<std::string> fields;
        while (std::getline(row, col, ',')) {
            if (!col.empty() && col.back() == '\r') col.pop_back();
            fields.push_back(col);
        }
        if (static_cast<int>(fields.size()) != 3 + 2 * r + p)
            throw IoError(path + ":" + std::to_string(line_no) + ": wrong field count");
        SubjectEffects e;
        e.id = fields[0];
        e.flagged = fields[1] == "1";
        e.loglik_contrib = std::stod(fields[2]);
        e.theta_hat.resize(r);
        e.tau_hat.resize(r);
        e.z_hat.resize(p);
        for (int k = 0; k < r; ++k) e.theta_hat(k) = std::stod(fields[3 + k]);
        for (int k = 0; k < r; ++k) e.tau_hat(k) = std::stod(fields[3 + r + k]);
        for (int k = 0; k < p; ++k) e.z_hat(k) = std::stod(fields[3 + 2 * r + k]);
        e.theta_cov = Eigen::MatrixXd::Zero(r, r);
        e.z_cov = Eigen::MatrixXd::Zero(p, p);
        effects.push_back(std::move(e));
    }
    return effects;
}

void save_trace_csv(const std::vector<double>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "iter,loglik\n";
    char buf[64];
    for (size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, trace[i]);
        out << buf;
    }
}

std::vector<double> load_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    std::vector<double> trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path + ": malformed trace row");
        trace.push_back(std::stod(line.substr(comma + 1)));
    }
    return trace;
}

}  // namespace warpfit
