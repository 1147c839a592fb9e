#include "warpfit/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace warpfit {

namespace {

constexpr double kWidth = 720.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 55.0;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// 1-2-5 ladder tick spacing
std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
    if (!(hi > lo)) return {lo};
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * mult >= raw) {
            step = mag * mult;
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
        ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return ticks;
}

}  // namespace

void SvgPlot::add_line(const std::vector<double>& x, const std::vector<double>& y,
                       const std::string& color, const std::string& dash) {
    lines_.push_back({x, y, color, dash});
}

void SvgPlot::write(const std::string& path) const {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const auto& line : lines_) {
        for (double v : line.x) {
            xlo = std::min(xlo, v);
            xhi = std::max(xhi, v);
        }
        for (double v : line.y) {
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    }
    if (!(xhi > xlo)) {
        xlo -= 1.0;
        xhi += 1.0;
    }
    if (!(yhi > ylo)) {
        ylo -= 1.0;
        yhi += 1.0;
    }
    const double ypad = 0.05 * (yhi - ylo);
    ylo -= ypad;
    yhi += ypad;

    const auto sx = [&](double v) {
        return kLeft + (v - xlo) / (xhi - xlo) * (kWidth - kLeft - kRight);
    };
    const auto sy = [&](double v) {
        return kHeight - kBottom - (v - ylo) / (yhi - ylo) * (kHeight - kTop - kBottom);
    };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << title_ << "</text>\n";

    for (double t : nice_ticks(xlo, xhi)) {
        const double px = sx(t);
        out << "<line x1=\"" << px << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << px
            << "\" y2=\"" << kHeight - kBottom + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px << "\" y=\"" << kHeight - kBottom + 20
            << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(t) << "</text>\n";
    }
    for (double t : nice_ticks(ylo, yhi)) {
        const double py = sy(t);
        out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py << "\" x2=\"" << kLeft << "\" y2=\""
            << py << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << kLeft - 8 << "\" y=\"" << py + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(t) << "</text>\n";
    }
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight
        << "\" height=\"" << kHeight - kTop - kBottom
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel_ << "</text>\n";
    out << "<text x=\"18\" y=\"" << (kTop + kHeight - kBottom) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
        << (kTop + kHeight - kBottom) / 2 << ")\">" << ylabel_ << "</text>\n";

    for (const auto& line : lines_) {
        out << "<polyline fill=\"none\" stroke=\"" << line.color << "\" stroke-width=\"1.1\"";
        if (!line.dash.empty()) out << " stroke-dasharray=\"" << line.dash << "\"";
        out << " points=\"";
        for (size_t i = 0; i < line.x.size(); ++i)
            out << sx(line.x[i]) << ',' << sy(line.y[i]) << ' ';
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

std::string PlotData::to_csv() const {
    std::ostringstream out;
    if (!tag_column.empty()) out << tag_column << ',';
    for (size_t c = 0; c < columns.size(); ++c) out << columns[c] << (c + 1 < columns.size() ? "," : "");
    out << '\n';
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!tag_column.empty()) out << row_tags[i] << ',';
        for (size_t c = 0; c < rows[i].size(); ++c)
            out << fmt_full(rows[i][c]) << (c + 1 < rows[i].size() ? "," : "");
        out << '\n';
    }
    return out.str();
}

PlotData plot_curves_data(const Dataset& data) {
    PlotData out;
    out.tag_column = "id";
    out.columns = {"t", "value"};
    for (const auto& c : data.curves) {
        for (int j = 0; j < c.m(); ++j) {
            out.row_tags.push_back(c.id);
            out.rows.push_back({c.t(j), c.y(j)});
        }
    }
    return out;
}

PlotData plot_registered_data(const Dataset& data, const std::vector<SubjectEffects>& effects,
                              const TemplateModel& model) {
    PlotData out;
    out.tag_column = "id";
    out.columns = {"t", "value"};
    for (const auto& c : data.curves) {
        const SubjectEffects* eff = nullptr;
        for (const auto& e : effects)
            if (e.id == c.id) eff = &e;
        if (!eff) throw ConstraintError("plot registered: no effects for id " + c.id);
        const Curve reg = register_curve(c, *eff, model);
        for (int j = 0; j < reg.m(); ++j) {
            out.row_tags.push_back(reg.id);
            out.rows.push_back({reg.t(j), reg.y(j)});
        }
    }
    return out;
}

PlotData plot_components_data(const TemplateModel& model, int grid_points) {
    PlotData out;
    out.columns = {"t", "mu"};
    for (int k = 1; k <= model.p(); ++k) {
        out.columns.push_back("plus_" + std::to_string(k));
        out.columns.push_back("minus_" + std::to_string(k));
        out.columns.push_back("xi_" + std::to_string(k));
    }
    const Interval iv = model.basis.interval();
    for (int i = 0; i < grid_points; ++i) {
        const double t = iv.lo + iv.length() * i / (grid_points - 1);
        const Eigen::VectorXd basis_row = model.basis.eval(t);
        const double mu = basis_row.dot(model.a);
        std::vector<double> row{t, mu};
        for (int k = 0; k < model.p(); ++k) {
            const double xi = basis_row.dot(model.C.col(k));
            const double scale = std::sqrt(model.lambda(k));
            row.push_back(mu + scale * xi);
            row.push_back(mu - scale * xi);
            row.push_back(xi);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

PlotData plot_warps_data(const TemplateModel& model, const std::vector<SubjectEffects>& effects,
                         int grid_points) {
    PlotData out;
    out.tag_column = "id";
    out.columns = {"t", "h"};
    const Interval iv = model.basis.interval();
    for (const auto& eff : effects) {
        const MonotoneWarp h = make_warp(WarpKnots{iv, model.tau0, eff.tau_hat});
        for (int i = 0; i < grid_points; ++i) {
            const double t = iv.lo + iv.length() * i / (grid_points - 1);
            out.row_tags.push_back(eff.id);
            out.rows.push_back({t, h(t)});
        }
    }
    return out;
}

PlotData plot_beta_data(const TemplateModel& model, const LogisticModel& logistic,
                        int grid_points) {
    if (logistic.b.size() != model.p())
        throw ConstraintError("plot beta: logistic model has a different number of scores");
    PlotData out;
    out.columns = {"t", "beta"};
    const Interval iv = model.basis.interval();
    for (int i = 0; i < grid_points; ++i) {
        const double t = iv.lo + iv.length() * i / (grid_points - 1);
        const Eigen::VectorXd basis_row = model.basis.eval(t);
        double beta = 0.0;
        for (int k = 0; k < model.p(); ++k)
            beta += logistic.b(k) * basis_row.dot(model.C.col(k));
        out.rows.push_back({t, beta});
    }
    return out;
}

void render_plot(const PlotData& data, const std::string& title,
                 const std::map<std::string, int>& tag_groups, const std::string& path) {
    static const char* kGroupColors[] = {"#1b6ca8", "#c0392b", "#27ae60", "#8e44ad"};
    static const char* kSeriesColors[] = {"#000000", "#1b6ca8", "#1b6ca8", "#c0392b",
                                          "#c0392b",  "#27ae60", "#27ae60"};
    SvgPlot plot(title, data.columns.empty() ? "" : data.columns.front(), "value");

    if (!data.tag_column.empty()) {
        // grouped polylines: consecutive rows with the same tag form a line
        size_t start = 0;
        while (start < data.rows.size()) {
            size_t end = start;
            while (end < data.rows.size() && data.row_tags[end] == data.row_tags[start]) ++end;
            std::vector<double> x, y;
            for (size_t i = start; i < end; ++i) {
                x.push_back(data.rows[i][0]);
                y.push_back(data.rows[i][1]);
            }
            int group = 0;
            if (auto it = tag_groups.find(data.row_tags[start]); it != tag_groups.end())
                group = it->second;
            plot.add_line(x, y, kGroupColors[group % 4]);
            start = end;
        }
    } else {
        for (size_t c = 1; c < data.columns.size(); ++c) {
            std::vector<double> x, y;
            for (const auto& row : data.rows) {
                x.push_back(row[0]);
                y.push_back(row[c]);
            }
            plot.add_line(x, y, kSeriesColors[(c - 1) % 7], c >= 2 ? "6,3" : "");
        }
    }
    plot.write(path);
}

}  // namespace warpfit
