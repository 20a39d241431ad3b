#include "tracena/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tracena/error.hpp"

namespace tracena {

namespace {

std::string num(double v, int decimals = 2) {
    char buf[64];
    if (v == 0.0) v = 0.0;  // normalize -0
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

}  // namespace

std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

std::string render_network_svg(const Eigen::MatrixXd& node_positions,
                               std::span<const double> edge_weights,
                               const NetworkRenderOptions& options) {
    if (node_positions.rows() != kProcessCount || node_positions.cols() < 1) {
        throw Error("render_network_svg: node positions must be 7 x D");
    }
    if (edge_weights.size() != kPairCount) {
        throw Error("render_network_svg: expected 21 edge weights");
    }
    const bool has_y = node_positions.cols() >= 2;

    // bounding box over nodes and group marks
    double min_x = node_positions.col(0).minCoeff();
    double max_x = node_positions.col(0).maxCoeff();
    double min_y = has_y ? node_positions.col(1).minCoeff() : 0.0;
    double max_y = has_y ? node_positions.col(1).maxCoeff() : 0.0;
    for (const GroupMark& mark : options.marks) {
        min_x = std::min(min_x, mark.x);
        max_x = std::max(max_x, mark.x);
        min_y = std::min(min_y, mark.y);
        max_y = std::max(max_y, mark.y);
    }
    for (const auto& [x, y] : options.scale_hull) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }
    // uniform scale to [-1,1]^2 preserving aspect
    const double half_span = std::max({max_x - min_x, max_y - min_y, 1e-12}) / 2.0;
    const double cx = (min_x + max_x) / 2.0;
    const double cy = (min_y + max_y) / 2.0;

    const double inner = options.canvas_px - 2.0 * options.margin_px;
    auto px = [&](double x) {
        return options.margin_px + ((x - cx) / half_span + 1.0) / 2.0 * inner;
    };
    auto py = [&](double y) {
        // SVG y grows downward
        return options.margin_px + (1.0 - ((y - cy) / half_span + 1.0) / 2.0) * inner;
    };

    double max_abs = 0.0;
    for (const double w : edge_weights) max_abs = std::max(max_abs, std::abs(w));

    std::array<double, kProcessCount> incident{};
    for (int p = 0; p < kPairCount; ++p) {
        const auto [i, j] = pair_codes(p);
        incident[static_cast<std::size_t>(i)] += std::abs(edge_weights[static_cast<std::size_t>(p)]);
        incident[static_cast<std::size_t>(j)] += std::abs(edge_weights[static_cast<std::size_t>(p)]);
    }
    const double max_incident = *std::max_element(incident.begin(), incident.end());

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(options.canvas_px, 0) +
           "\" height=\"" + num(options.canvas_px, 0) + "\" viewBox=\"0 0 " +
           num(options.canvas_px, 0) + " " + num(options.canvas_px, 0) + "\">\n";
    svg += "  <desc>scale: center=(" + num(cx, 6) + "," + num(cy, 6) + ") half_span=" +
           num(half_span, 6) + " box=[-1,1]^2</desc>\n";
    if (!options.title.empty()) {
        svg += "  <title>" + options.title + "</title>\n";
    }

    for (int p = 0; p < kPairCount; ++p) {
        const double w = edge_weights[static_cast<std::size_t>(p)];
        if (w == 0.0) continue;
        const auto [i, j] = pair_codes(p);
        const double width = max_abs > 0.0 ? 0.5 + 7.5 * std::abs(w) / max_abs : 0.5;
        const std::string& color = options.signed_weights
                                       ? (w > 0.0 ? options.positive_color : options.negative_color)
                                       : options.positive_color;
        svg += "  <line class=\"edge\" data-pair=\"" + pair_name(p) + "\" x1=\"" +
               num(px(node_positions(i, 0))) + "\" y1=\"" +
               num(py(has_y ? node_positions(i, 1) : 0.0)) + "\" x2=\"" +
               num(px(node_positions(j, 0))) + "\" y2=\"" +
               num(py(has_y ? node_positions(j, 1) : 0.0)) + "\" stroke=\"" + color +
               "\" stroke-width=\"" + num(width) + "\" data-weight=\"" + num(w, 6) + "\"/>\n";
    }

    for (int i = 0; i < kProcessCount; ++i) {
        const double radius =
            max_incident > 0.0 ? 3.0 + 11.0 * incident[static_cast<std::size_t>(i)] / max_incident
                               : 3.0;
        const double x = px(node_positions(i, 0));
        const double y = py(has_y ? node_positions(i, 1) : 0.0);
        svg += "  <circle class=\"node\" data-code=\"" +
               std::string(to_string(static_cast<SrlProcess>(i))) + "\" cx=\"" + num(x) +
               "\" cy=\"" + num(y) + "\" r=\"" + num(radius) + "\" fill=\"#444444\"/>\n";
        svg += "  <text x=\"" + num(x + radius + 3.0) + "\" y=\"" + num(y - 3.0) +
               "\" font-size=\"11\">" + std::string(to_string(static_cast<SrlProcess>(i))) +
               "</text>\n";
    }

    for (const GroupMark& mark : options.marks) {
        const double s = 10.0;
        svg += "  <rect class=\"group-mean\" data-group=\"" + mark.label + "\" x=\"" +
               num(px(mark.x) - s / 2.0) + "\" y=\"" + num(py(mark.y) - s / 2.0) + "\" width=\"" +
               num(s) + "\" height=\"" + num(s) + "\" fill=\"" + mark.color + "\"/>\n";
    }

    svg += "</svg>\n";
    return svg;
}

namespace {

// p-values are reported as inequalities below the usual thresholds
std::string p_cell(double p) {
    if (p < 0.001) return "<0.001";
    if (p < 0.01) return "<0.01";
    if (p < 0.05) return "<0.05";
    return num(p);
}

constexpr std::array<std::pair<const char*, const char*>, 7> kTableRows = {{
    {"intercept", "Intercept"},
    {"performance_low", "performance_low"},
    {"school_1", "school_1"},
    {"cet4_score", "cet4_score"},
    {"level_SE", "level_SE"},
    {"pretest_score", "pretest_score"},
    {"task_length", "task_length"},
}};

}  // namespace

std::string render_regression_table(std::span<const RegressionResult> results) {
    if (results.empty()) throw Error("render_regression_table: no results");

    const std::size_t label_width = 18;
    const std::size_t cell_width = 18;
    auto pad = [](std::string s, std::size_t width) {
        if (s.size() < width) s.resize(width, ' ');
        return s;
    };

    std::string out;
    out += pad("", label_width);
    for (const RegressionResult& r : results) {
        out += pad(std::string(to_string(r.model_id)), cell_width);
    }
    out += "\n";
    out += std::string(label_width + cell_width * results.size(), '-') + "\n";

    for (const auto& [name, label] : kTableRows) {
        bool present_anywhere = false;
        for (const RegressionResult& r : results) {
            present_anywhere = present_anywhere ||
                               std::find(r.column_names.begin(), r.column_names.end(), name) !=
                                   r.column_names.end();
        }
        if (!present_anywhere) continue;

        out += pad(label, label_width);
        for (const RegressionResult& r : results) {
            const auto it = std::find(r.column_names.begin(), r.column_names.end(), name);
            if (it == r.column_names.end()) {
                out += pad("-", cell_width);
                continue;
            }
            const auto c = static_cast<Eigen::Index>(it - r.column_names.begin());
            const std::string cell = num(r.coefficients(c)) + significance_stars(r.p_values(c)) +
                                     " (" + num(r.standard_errors(c)) + ")";
            out += pad(cell, cell_width);
        }
        out += "\n";
    }

    out += std::string(label_width + cell_width * results.size(), '-') + "\n";
    auto summary_row = [&](const std::string& label, auto value_of) {
        out += pad(label, label_width);
        for (const RegressionResult& r : results) out += pad(value_of(r), cell_width);
        out += "\n";
    };
    summary_row("Residual", [&](const RegressionResult& r) { return num(r.residual_se); });
    summary_row("R-squared", [&](const RegressionResult& r) { return num(r.r_squared); });
    summary_row("F-value", [&](const RegressionResult& r) { return num(r.f_value); });
    summary_row("p-value", [&](const RegressionResult& r) { return p_cell(r.f_p_value); });
    summary_row("Num. obs.", [&](const RegressionResult& r) { return std::to_string(r.n_obs); });
    out += "*** p<0.001; ** p<0.01; * p<0.05. Standard errors in parentheses. "
           "Dashes indicate omitted variables.\n";
    return out;
}

}  // namespace tracena
