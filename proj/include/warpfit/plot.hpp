#pragma once

#include <map>
#include <string>
#include <vector>

#include "warpfit/discriminate.hpp"
#include "warpfit/em.hpp"
#include "warpfit/model.hpp"

namespace warpfit {

// Minimal SVG line plot: polylines over auto-scaled axes with tick labels.
// The CSV emitted next to each plot is the testable artifact; the SVG is a
// rendering of the same numbers.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void add_line(const std::vector<double>& x, const std::vector<double>& y,
                  const std::string& color, const std::string& dash = "");
    void write(const std::string& path) const;

private:
    struct Line {
        std::vector<double> x, y;
        std::string color, dash;
    };
    std::string title_, xlabel_, ylabel_;
    std::vector<Line> lines_;
};

// Tabular payload behind a plot; serialized as CSV.
struct PlotData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;          // numeric cells
    std::vector<std::string> row_tags;              // leading id column, may be empty
    std::string tag_column;                         // name of the id column when present

    std::string to_csv() const;
};

// kind "curves": raw spaghetti, one polyline per subject (grouped by label).
PlotData plot_curves_data(const Dataset& data);

// kind "registered": spaghetti on the aligned grids.
PlotData plot_registered_data(const Dataset& data, const std::vector<SubjectEffects>& effects,
                              const TemplateModel& model);

// kind "components": mean, mean +/- sqrt(lambda_k) xi_k, and raw xi_k.
PlotData plot_components_data(const TemplateModel& model, int grid_points = 201);

// kind "warps": h_i(t) overlays.
PlotData plot_warps_data(const TemplateModel& model, const std::vector<SubjectEffects>& effects,
                         int grid_points = 201);

// kind "beta": beta(t) = sum_k b_k xi_k(t) from a fitted logistic model.
PlotData plot_beta_data(const TemplateModel& model, const LogisticModel& logistic,
                        int grid_points = 201);

// Renders a PlotData as polylines (grouped by tag when tags are present,
// assuming columns are (x, y); otherwise one line per y column against the
// first column) and writes the SVG.
void render_plot(const PlotData& data, const std::string& title,
                 const std::map<std::string, int>& tag_groups, const std::string& path);

}  // namespace warpfit
