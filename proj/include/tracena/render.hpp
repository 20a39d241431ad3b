#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tracena/ena_engine.hpp"
#include "tracena/stats.hpp"

// Deterministic vector-graphics rendering of networks and a fixed-format
// regression table. SVG output is plain text so tests can assert structure.

namespace tracena {

struct GroupMark {
    std::string label;
    double x = 0.0;   // mean scores in embedding coordinates
    double y = 0.0;
    std::string color;
};

struct NetworkRenderOptions {
    bool signed_weights = false;              // subtraction mode: color by sign
    std::string positive_color = "#1f77b4";   // group A
    std::string negative_color = "#d62728";   // group B
    std::string title;
    std::vector<GroupMark> marks;
    // extra points (unit scores) the canvas scaling must cover
    std::vector<std::pair<double, double>> scale_hull;
    double canvas_px = 600.0;
    double margin_px = 60.0;
};

// Nodes at the fitted positions (columns 0 and 1 of node_positions), radius
// proportional to total incident weight, edge thickness proportional to
// |weight|. The bounding box of nodes and marks maps to [-1,1]^2 preserving
// aspect; the mapping is recorded in the file's <desc>.
std::string render_network_svg(const Eigen::MatrixXd& node_positions,
                               std::span<const double> edge_weights,
                               const NetworkRenderOptions& options);

// Side-by-side model table: coefficient cells like "0.33*** (0.10)", dashes
// for omitted variables, significance stars at 0.05 / 0.01 / 0.001.
std::string render_regression_table(std::span<const RegressionResult> results);

std::string significance_stars(double p);

}  // namespace tracena
