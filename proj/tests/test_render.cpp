#include <doctest.h>

#include "fixtures.hpp"
#include "tracena/error.hpp"
#include "tracena/render.hpp"

using namespace tracena;
using namespace tracena::testing;

namespace {

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

Eigen::MatrixXd spread_positions() {
    Eigen::MatrixXd positions(kProcessCount, 2);
    for (int i = 0; i < kProcessCount; ++i) {
        positions(i, 0) = std::cos(i * 0.9);
        positions(i, 1) = std::sin(i * 0.9);
    }
    return positions;
}

RegressionResult fake_result(ModelId model, std::vector<std::string> names,
                             std::vector<double> beta, std::vector<double> se,
                             std::vector<double> p) {
    RegressionResult r;
    r.model_id = model;
    r.column_names = std::move(names);
    const auto k = static_cast<Eigen::Index>(beta.size());
    r.coefficients.resize(k);
    r.standard_errors.resize(k);
    r.t_values.resize(k);
    r.p_values.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        r.coefficients(c) = beta[static_cast<std::size_t>(c)];
        r.standard_errors(c) = se[static_cast<std::size_t>(c)];
        r.t_values(c) = beta[static_cast<std::size_t>(c)] / se[static_cast<std::size_t>(c)];
        r.p_values(c) = p[static_cast<std::size_t>(c)];
    }
    return r;
}

}  // namespace

TEST_SUITE_BEGIN("render");

TEST_CASE("a zero network renders 7 nodes and no edges") {
    const std::array<double, kPairCount> weights{};
    const std::string svg =
        render_network_svg(spread_positions(), weights, NetworkRenderOptions{});
    CHECK(count_occurrences(svg, "<circle") == 7);
    CHECK(count_occurrences(svg, "<line") == 0);
    CHECK(svg.find("<svg") == 0);
}

TEST_CASE("a single positive pair in a subtraction uses the group A color") {
    std::array<double, kPairCount> weights{};
    weights[pair_index(1, 4)] = 0.2;
    NetworkRenderOptions options;
    options.signed_weights = true;
    const std::string svg = render_network_svg(spread_positions(), weights, options);
    CHECK(count_occurrences(svg, "<line") == 1);
    CHECK(svg.find("stroke=\"#1f77b4\"") != std::string::npos);
    CHECK(svg.find("#d62728") == std::string::npos);

    weights[pair_index(1, 4)] = -0.2;
    const std::string negative = render_network_svg(spread_positions(), weights, options);
    CHECK(negative.find("stroke=\"#d62728\"") != std::string::npos);
}

TEST_CASE("the planted strongest pair gets the thickest stroke") {
    std::array<double, kPairCount> weights{};
    for (int p = 0; p < kPairCount; ++p) weights[p] = 0.02;
    weights[pair_index(5, 6)] = 0.5;
    const std::string svg =
        render_network_svg(spread_positions(), weights, NetworkRenderOptions{});

    // pull every stroke-width and the one on the planted pair
    double max_width = 0.0, planted_width = 0.0;
    std::size_t pos = 0;
    while ((pos = svg.find("stroke-width=\"", pos)) != std::string::npos) {
        pos += 14;
        const double width = std::stod(svg.substr(pos));
        max_width = std::max(max_width, width);
        const std::size_t line_start = svg.rfind("<line", pos);
        const std::size_t pair_at = svg.find("data-pair=\"", line_start);
        if (svg.compare(pair_at + 11, 34, "ReReading--ElaborationOrganisation") == 0) {
            planted_width = width;
        }
    }
    CHECK(planted_width == max_width);
    CHECK(planted_width > 0.0);
}

TEST_CASE("group mean squares are drawn and rendering is deterministic") {
    std::array<double, kPairCount> weights{};
    weights[0] = 0.3;
    NetworkRenderOptions options;
    options.marks = {{"high", 0.4, 0.1, "#1f77b4"}, {"low", -0.4, -0.1, "#d62728"}};
    const std::string first = render_network_svg(spread_positions(), weights, options);
    const std::string second = render_network_svg(spread_positions(), weights, options);
    CHECK(first == second);
    CHECK(count_occurrences(first, "<rect") == 2);
    CHECK(first.find("data-group=\"high\"") != std::string::npos);
    CHECK(first.find("<desc>scale:") != std::string::npos);
}

TEST_CASE("significance stars follow the three conventional thresholds") {
    CHECK(significance_stars(0.0005) == "***");
    CHECK(significance_stars(0.005) == "**");
    CHECK(significance_stars(0.02) == "*");
    CHECK(significance_stars(0.08) == "");
}

TEST_CASE("the regression table mirrors the published layout conventions") {
    const RegressionResult m1 = fake_result(
        ModelId::M1, {"intercept", "performance_low", "school_1", "pretest_score", "task_length"},
        {-0.49, 0.33, 0.18, 0.04, 0.00}, {0.19, 0.10, 0.10, 0.03, 0.00},
        {0.012, 0.0005, 0.08, 0.2, 0.9});
    const RegressionResult m3 = fake_result(
        ModelId::M3, {"intercept", "performance_low", "level_SE", "pretest_score"},
        {-0.41, 0.04, 0.65, 0.01}, {0.04, 0.02, 0.02, 0.00}, {0.0001, 0.03, 0.0001, 0.2});

    std::vector<RegressionResult> results = {m1, m3};
    results[0].r_squared = 0.19;
    results[0].residual_se = 0.38;
    results[0].f_value = 3.59;
    results[0].f_p_value = 0.008;
    results[0].n_obs = 66;
    results[1].r_squared = 0.91;
    results[1].residual_se = 0.10;
    results[1].f_value = 408.1;
    results[1].f_p_value = 0.0001;
    results[1].n_obs = 125;

    const std::string table = render_regression_table(results);

    // coefficient cell: stars attach to the estimate, SE parenthesized
    CHECK(table.find("0.33*** (0.10)") != std::string::npos);
    // covariates absent from a model print a dash
    const std::size_t school_row = table.find("school_1");
    REQUIRE(school_row != std::string::npos);
    const std::string row = table.substr(school_row, table.find('\n', school_row) - school_row);
    CHECK(row.find("0.18 (0.10)") != std::string::npos);
    CHECK(row.find("-") != std::string::npos);
    // p-values render as threshold inequalities
    CHECK(table.find("<0.01") != std::string::npos);
    CHECK(table.find("<0.001") != std::string::npos);
    // legend
    CHECK(table.find("*** p<0.001; ** p<0.01; * p<0.05") != std::string::npos);
    CHECK(table.find("Num. obs.") != std::string::npos);

    // frozen golden fixture for the full layout
    const std::string golden = read_file(data_dir() / "golden" / "table_m1_m3.txt");
    CHECK(table == golden);
}

TEST_SUITE_END();
