#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "reference.hpp"
#include "tracena/error.hpp"
#include "tracena/rng.hpp"
#include "tracena/stats.hpp"

using namespace tracena;
using namespace tracena::testing;

namespace {

std::map<UnitId, double> score_map(const std::vector<double>& values) {
    std::map<UnitId, double> scores;
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::string id = "u" + std::to_string(i);
        if (id.size() < 4) id.insert(1, std::string(4 - id.size(), '0'));
        scores.emplace(UnitId{id, "s1"}, values[i]);
    }
    return scores;
}

DesignMatrix design_from(const std::vector<std::vector<double>>& x,
                         const std::vector<double>& y,
                         std::vector<std::string> names = {}) {
    DesignMatrix design;
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto k = static_cast<Eigen::Index>(x.front().size());
    design.columns.resize(n, k);
    design.response.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        design.response(r) = y[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < k; ++c) {
            design.columns(r, c) = x[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
    }
    if (names.empty()) {
        names.push_back("intercept");
        for (Eigen::Index c = 1; c < k; ++c) names.push_back("x" + std::to_string(c));
    }
    design.column_names = std::move(names);
    return design;
}

// y = intercept + sum(beta_c x_c) + noise, with random regressors
DesignMatrix random_design(std::mt19937_64& gen, int n, int k, double noise_sd) {
    std::vector<std::vector<double>> x(static_cast<std::size_t>(n));
    std::vector<double> y(static_cast<std::size_t>(n));
    std::vector<double> beta(static_cast<std::size_t>(k));
    for (auto& b : beta) b = rng::normal(gen, 0.0, 2.0);
    for (int r = 0; r < n; ++r) {
        auto& row = x[static_cast<std::size_t>(r)];
        row.resize(static_cast<std::size_t>(k), 1.0);
        for (int c = 1; c < k; ++c) row[static_cast<std::size_t>(c)] = rng::normal(gen, 0.0, 1.0);
        double value = 0.0;
        for (int c = 0; c < k; ++c) value += beta[static_cast<std::size_t>(c)] * row[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = value + rng::normal(gen, 0.0, noise_sd);
    }
    return design_from(x, y);
}

MetadataTable fake_metadata(int n_se, int n_he, std::uint64_t seed) {
    MetadataTable table;
    auto stream = rng::make_stream(seed, 0);
    for (int i = 0; i < n_se + n_he; ++i) {
        std::string id = "u" + std::to_string(i);
        if (id.size() < 4) id.insert(1, std::string(4 - id.size(), '0'));
        SessionMetadata meta;
        meta.education_level = i < n_se ? EducationLevel::SE : EducationLevel::HE;
        meta.school_id = meta.education_level == EducationLevel::SE
                             ? (i % 2 ? "school_1" : "school_0")
                             : "";
        meta.essay_score = rng::normal(stream, meta.education_level == EducationLevel::SE ? 11.0 : 14.0, 2.0);
        meta.pretest_score = std::clamp(rng::normal(stream, 8.0, 2.0), 0.0, 15.0);
        meta.task_length_minutes = std::max(rng::normal(stream, 40.0, 5.0), 1.0);
        if (meta.education_level == EducationLevel::HE) {
            meta.cet4_score = rng::normal(stream, 500.0, 40.0);
        }
        table.emplace(UnitId{id, "s1"}, meta);
    }
    return table;
}

}  // namespace

TEST_SUITE_BEGIN("stats");

TEST_CASE("median split uses the sample median with the documented tie rule") {
    SUBCASE("SE-like scores around a median of 11.5") {
        const auto groups = median_split(score_map({8, 9, 10, 11, 12, 13, 14, 15}));
        CHECK(groups.at({"u003", "s1"}) == PerfGroup::Low);   // 11 < 11.5
        CHECK(groups.at({"u004", "s1"}) == PerfGroup::High);  // 12 > 11.5
        int high = 0;
        for (const auto& [unit, g] : groups) high += g == PerfGroup::High;
        CHECK(high == 4);
    }
    SUBCASE("HE-like scores with a unit exactly at the median of 14") {
        const auto groups = median_split(score_map({12, 13, 14, 15, 16}));
        CHECK(groups.at({"u002", "s1"}) == PerfGroup::Low);  // tie goes low
        const auto high_tie =
            median_split(score_map({12, 13, 14, 15, 16}), TieRule::High);
        CHECK(high_tie.at({"u002", "s1"}) == PerfGroup::High);
    }
    SUBCASE("even sample interpolates the median") {
        const auto groups = median_split(score_map({1, 2, 3, 4}));
        CHECK(groups.at({"u000", "s1"}) == PerfGroup::Low);
        CHECK(groups.at({"u001", "s1"}) == PerfGroup::Low);
        CHECK(groups.at({"u002", "s1"}) == PerfGroup::High);
        CHECK(groups.at({"u003", "s1"}) == PerfGroup::High);
    }
    SUBCASE("assignment is invariant under adding a constant") {
        std::mt19937_64 gen(12);
        std::vector<double> values;
        for (int i = 0; i < 31; ++i) values.push_back(rng::normal(gen, 10.0, 3.0));
        std::vector<double> shifted = values;
        for (auto& v : shifted) v += 123.25;
        CHECK(median_split(score_map(values)) == median_split(score_map(shifted)));
    }
    SUBCASE("fewer than two units is an error") {
        CHECK_THROWS_AS(median_split(score_map({1.0})), Error);
    }
}

TEST_CASE("ols recovers an exact linear relationship") {
    const DesignMatrix design = design_from(
        {{1, 1}, {1, 2}, {1, 3}, {1, 4}, {1, 5}}, {2, 4, 6, 8, 10});
    const RegressionResult fit = ols_fit(design);
    CHECK(fit.coefficient("x1") == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.coefficient("intercept") == doctest::Approx(0.0).scale(1).epsilon(1e-10));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a regressor orthogonal to the response gets a zero slope") {
    // x mean-centered, y mean-centered, zero covariance
    const DesignMatrix design = design_from(
        {{1, -1}, {1, 0}, {1, 1}, {1, 0}}, {1, -1, 1, -1});
    const RegressionResult fit = ols_fit(design);
    CHECK(fit.coefficient("x1") == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("ols matches the normal-equation oracle on a random 20x3 system") {
    std::mt19937_64 gen(314);
    const DesignMatrix design = random_design(gen, 20, 3, 0.5);
    const RegressionResult fit = ols_fit(design);

    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (Eigen::Index r = 0; r < design.n(); ++r) {
        std::vector<double> row;
        for (Eigen::Index c = 0; c < design.k(); ++c) row.push_back(design.columns(r, c));
        x.push_back(std::move(row));
        y.push_back(design.response(r));
    }
    const auto oracle = reference::ols_normal_equations(x, y);
    for (Eigen::Index c = 0; c < design.k(); ++c) {
        CHECK(fit.coefficients(c) == doctest::Approx(oracle.beta[static_cast<std::size_t>(c)]).epsilon(1e-9));
        CHECK(fit.standard_errors(c) == doctest::Approx(oracle.se[static_cast<std::size_t>(c)]).epsilon(1e-9));
    }
    CHECK(fit.r_squared == doctest::Approx(oracle.r_squared).epsilon(1e-9));
}

TEST_CASE("ols matches the oracle across many randomized designs") {
    std::mt19937_64 gen(2718);
    for (int round = 0; round < 120; ++round) {
        const int k = 2 + static_cast<int>(gen() % 4);         // <= 5
        const int n = k + 2 + static_cast<int>(gen() % 45);    // <= 50
        const DesignMatrix design = random_design(gen, n, k, 0.3 + 0.1 * (round % 5));
        const RegressionResult fit = ols_fit(design);

        std::vector<std::vector<double>> x;
        std::vector<double> y;
        for (Eigen::Index r = 0; r < design.n(); ++r) {
            std::vector<double> row;
            for (Eigen::Index c = 0; c < design.k(); ++c) row.push_back(design.columns(r, c));
            x.push_back(std::move(row));
            y.push_back(design.response(r));
        }
        const auto oracle = reference::ols_normal_equations(x, y);
        for (Eigen::Index c = 0; c < design.k(); ++c) {
            CHECK(std::abs(fit.coefficients(c) - oracle.beta[static_cast<std::size_t>(c)]) < 1e-9);
            CHECK(std::abs(fit.standard_errors(c) - oracle.se[static_cast<std::size_t>(c)]) < 1e-9);
        }
        CHECK(std::abs(fit.r_squared - oracle.r_squared) < 1e-9);

        // reported t always equals beta / SE
        for (Eigen::Index c = 0; c < design.k(); ++c) {
            CHECK(fit.t_values(c) ==
                  doctest::Approx(fit.coefficients(c) / fit.standard_errors(c)).epsilon(1e-9));
        }
    }
}

TEST_CASE("r-squared is invariant under affine rescaling of one covariate") {
    std::mt19937_64 gen(555);
    const DesignMatrix design = random_design(gen, 30, 4, 1.0);
    const double r2 = ols_fit(design).r_squared;

    DesignMatrix scaled = design;
    scaled.columns.col(2) = design.columns.col(2) * 3.5;
    scaled.columns.col(2).array() += 11.0;
    CHECK(ols_fit(scaled).r_squared == doctest::Approx(r2).epsilon(1e-9));
}

TEST_CASE("degenerate designs are rejected") {
    SUBCASE("more columns than observations") {
        CHECK_THROWS_WITH_AS(ols_fit(design_from({{1, 2}, {1, 3}}, {1, 2})),
                             doctest::Contains("observations"), Error);
    }
    SUBCASE("exactly collinear columns") {
        const DesignMatrix design = design_from(
            {{1, 2, 4}, {1, 3, 6}, {1, 5, 10}, {1, 7, 14}, {1, 1, 2}}, {1, 2, 3, 4, 5});
        CHECK_THROWS_AS(ols_fit(design), Error);
    }
    SUBCASE("constant non-intercept column") {
        const DesignMatrix design = design_from(
            {{1, 2, 3}, {1, 2, 4}, {1, 2, 5}, {1, 2, 6}}, {1, 2, 3, 4});
        CHECK_THROWS_WITH_AS(ols_fit(design), doctest::Contains("constant"), Error);
    }
}

TEST_CASE("interaction scan flags only real slope differences") {
    SUBCASE("independent covariate stays quiet under the null") {
        int rejections = 0;
        const int reps = 40;
        for (int rep = 0; rep < reps; ++rep) {
            auto gen = rng::make_stream(900, static_cast<std::uint64_t>(rep));
            const int n = 100;
            std::vector<std::vector<double>> x;
            std::vector<double> y;
            for (int i = 0; i < n; ++i) {
                const double factor = i % 2 ? 1.0 : 0.0;
                const double cov = rng::normal(gen, 0.0, 1.0);
                x.push_back({1.0, factor, cov});
                y.push_back(0.5 + 0.8 * factor + 0.3 * cov + rng::normal(gen, 0.0, 1.0));
            }
            const auto tests = interaction_scan(design_from(x, y, {"intercept", "factor", "cov"}),
                                                "factor");
            REQUIRE(tests.size() == 1);
            if (tests[0].p_value < 0.05) ++rejections;
        }
        CHECK(rejections <= reps / 10);  // >= 90% of replications keep p > 0.05
    }
    SUBCASE("a slope that differs by one across levels is detected") {
        auto gen = rng::make_stream(901, 0);
        const int n = 100;
        std::vector<std::vector<double>> x;
        std::vector<double> y;
        for (int i = 0; i < n; ++i) {
            const double factor = i % 2 ? 1.0 : 0.0;
            const double cov = rng::normal(gen, 0.0, 1.0);
            x.push_back({1.0, factor, cov});
            const double slope = 0.5 + factor * 1.0;
            y.push_back(slope * cov + rng::normal(gen, 0.0, 0.1));
        }
        const auto tests = interaction_scan(design_from(x, y, {"intercept", "factor", "cov"}),
                                            "factor");
        REQUIRE(tests.size() == 1);
        CHECK(tests[0].covariate == "cov");
        CHECK(tests[0].p_value < 0.001);
        CHECK(tests[0].coefficient == doctest::Approx(1.0).epsilon(0.1));
    }
    SUBCASE("a zero-variance covariate is rejected") {
        std::vector<std::vector<double>> x;
        std::vector<double> y;
        for (int i = 0; i < 10; ++i) {
            x.push_back({1.0, static_cast<double>(i % 2), 4.0});
            y.push_back(static_cast<double>(i));
        }
        CHECK_THROWS_AS(
            interaction_scan(design_from(x, y, {"intercept", "factor", "cov"}), "factor"), Error);
    }
}

TEST_CASE("bootstrap percentile intervals behave") {
    SUBCASE("noiseless data collapses the interval") {
        const DesignMatrix design = design_from(
            {{1, 1}, {1, 2}, {1, 3}, {1, 4}, {1, 5}, {1, 6}}, {2, 4, 6, 8, 10, 12});
        BootstrapOptions options;
        options.replicates = 200;
        const BootstrapResult result = bootstrap_ci(design, options);
        CHECK(result.ci[1].first == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(result.ci[1].second == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(result.redraws == 0);
    }
    SUBCASE("same seed gives identical intervals; thread count does not matter") {
        std::mt19937_64 gen(606);
        const DesignMatrix design = random_design(gen, 40, 3, 1.0);
        BootstrapOptions options;
        options.replicates = 300;
        options.seed = 11;
        const BootstrapResult first = bootstrap_ci(design, options);
        const BootstrapResult second = bootstrap_ci(design, options);
        options.parallel = false;
        const BootstrapResult serial = bootstrap_ci(design, options);
        for (std::size_t c = 0; c < first.ci.size(); ++c) {
            CHECK(first.ci[c] == second.ci[c]);
            CHECK(first.ci[c] == serial.ci[c]);
        }
    }
    SUBCASE("interval width shrinks with sample size on average") {
        double width_small = 0.0, width_large = 0.0;
        const int reps = 12;
        for (int rep = 0; rep < reps; ++rep) {
            auto gen = rng::make_stream(1234, static_cast<std::uint64_t>(rep));
            for (const int n : {30, 240}) {
                std::vector<std::vector<double>> x;
                std::vector<double> y;
                for (int i = 0; i < n; ++i) {
                    const double value = rng::normal(gen, 0.0, 1.0);
                    x.push_back({1.0, value});
                    y.push_back(0.5 * value + rng::normal(gen, 0.0, 1.0));
                }
                BootstrapOptions options;
                options.replicates = 200;
                options.seed = static_cast<std::uint64_t>(rep);
                const BootstrapResult result = bootstrap_ci(design_from(x, y), options);
                const double width = result.ci[1].second - result.ci[1].first;
                (n == 30 ? width_small : width_large) += width;
            }
        }
        CHECK(width_large < width_small);
    }
    SUBCASE("parameter validation") {
        const DesignMatrix design = design_from({{1, 1}, {1, 2}, {1, 3}}, {1, 2, 3});
        BootstrapOptions options;
        options.replicates = 50;
        CHECK_THROWS_WITH_AS(bootstrap_ci(design, options), doctest::Contains("100"), Error);
        options.replicates = 100;
        options.alpha = 1.5;
        CHECK_THROWS_AS(bootstrap_ci(design, options), Error);
    }
}

TEST_CASE("cohens_d is the pooled-sd standardized mean difference") {
    SUBCASE("equal means give zero") {
        const std::vector<double> a = {1, 2, 3, 4};
        const std::vector<double> b = {2.5, 2.5, 2, 3};
        CHECK(cohens_d(a, b) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    }
    SUBCASE("hand-computed example") {
        const std::vector<double> a = {1, 2, 3};
        const std::vector<double> b = {3, 4, 5};
        CHECK(cohens_d(a, b) == doctest::Approx(-2.0).epsilon(1e-12));
    }
    SUBCASE("antisymmetry") {
        std::mt19937_64 gen(8);
        for (int round = 0; round < 30; ++round) {
            std::vector<double> a, b;
            for (int i = 0; i < 10; ++i) {
                a.push_back(rng::normal(gen, 1.0, 2.0));
                b.push_back(rng::normal(gen, -0.5, 1.0));
            }
            CHECK(cohens_d(a, b) == doctest::Approx(-cohens_d(b, a)).epsilon(1e-12));
        }
    }
    SUBCASE("degenerate groups are rejected") {
        const std::vector<double> single = {1};
        const std::vector<double> pair = {1, 2};
        CHECK_THROWS_AS(cohens_d(single, pair), Error);
        const std::vector<double> flat = {2, 2, 2};
        CHECK_THROWS_WITH_AS(cohens_d(flat, flat), doctest::Contains("pooled"), Error);
    }
}

TEST_CASE("build_design assembles the documented model columns") {
    const MetadataTable metadata = fake_metadata(20, 20, 77);
    std::map<UnitId, double> mr1;
    auto stream = rng::make_stream(78, 0);
    for (const auto& [unit, meta] : metadata) mr1[unit] = rng::normal(stream, 0.0, 0.4);

    SUBCASE("M1 needs a reference school and gets the SE columns") {
        std::map<UnitId, double> se_only;
        for (const auto& [unit, score] : mr1) {
            if (metadata.at(unit).education_level == EducationLevel::SE) se_only[unit] = score;
        }
        CHECK_THROWS_WITH_AS(build_design(se_only, metadata, ModelId::M1),
                             doctest::Contains("reference school"), Error);
        const DesignMatrix design =
            build_design(se_only, metadata, ModelId::M1, TieRule::Low, std::string("school_0"));
        CHECK(design.column_names ==
              std::vector<std::string>{"intercept", "performance_low", "school_1",
                                       "pretest_score", "task_length"});
        CHECK(design.n() == 20);
        const RegressionResult fit = ols_fit(design);
        CHECK(fit.n_obs == 20);
    }
    SUBCASE("M2 uses cet4 and fails when a unit lacks it") {
        std::map<UnitId, double> he_only;
        for (const auto& [unit, score] : mr1) {
            if (metadata.at(unit).education_level == EducationLevel::HE) he_only[unit] = score;
        }
        const DesignMatrix design = build_design(he_only, metadata, ModelId::M2);
        CHECK(design.column_names ==
              std::vector<std::string>{"intercept", "performance_low", "cet4_score",
                                       "pretest_score", "task_length"});
        CHECK_THROWS_WITH_AS(build_design(mr1, metadata, ModelId::M2), doctest::Contains("cet4"),
                             Error);
    }
    SUBCASE("M3 contrasts levels without task length") {
        const DesignMatrix design = build_design(mr1, metadata, ModelId::M3);
        CHECK(design.column_names ==
              std::vector<std::string>{"intercept", "performance_low", "level_SE",
                                       "pretest_score"});
        CHECK(design.n() == 40);
        int se_count = 0;
        const int level_col = design.column("level_SE");
        for (Eigen::Index r = 0; r < design.n(); ++r) {
            se_count += design.columns(r, level_col) == 1.0;
        }
        CHECK(se_count == 20);
    }
}

TEST_SUITE_END();
