#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tracena/trace_model.hpp"

// Performance-group assignment, OLS regression of ENA scores on group and
// covariates, percentile-bootstrap confidence intervals and Cohen's d.

namespace tracena {

enum class PerfGroup : std::uint8_t { High, Low };
enum class TieRule : std::uint8_t { Low, High };

std::string_view to_string(PerfGroup g);
TieRule parse_tie_rule(std::string_view token);

// Median split: score > median -> High, score < median -> Low, score ==
// median -> tie rule (default Low). Standard even/odd-sample median.
std::map<UnitId, PerfGroup> median_split(const std::map<UnitId, double>& scores,
                                         TieRule tie = TieRule::Low);

double median(std::vector<double> values);

enum class ModelId : std::uint8_t { M1, M2, M3 };

std::string_view to_string(ModelId m);
ModelId parse_model_id(std::string_view token);

struct DesignMatrix {
    Eigen::VectorXd response;               // MR1 scores
    Eigen::MatrixXd columns;                // N x k, column 0 = intercept
    std::vector<std::string> column_names;  // aligned with columns
    ModelId model_id = ModelId::M1;
    std::vector<UnitId> units;              // row order (may be empty for ad-hoc designs)

    Eigen::Index n() const { return columns.rows(); }
    Eigen::Index k() const { return columns.cols(); }
    int column(std::string_view name) const;  // -1 when absent
};

// Assembles the model's column set from ENA scores and session metadata.
//   M1: intercept, performance_low, school_1, pretest_score, task_length
//   M2: intercept, performance_low, cet4_score, pretest_score, task_length
//   M3: intercept, performance_low, level_SE, pretest_score
// performance_low comes from a median split of essay scores within each
// education level. school_1 needs an explicit reference school (never
// guessed): it is 1 for rows whose school differs from the reference.
DesignMatrix build_design(const std::map<UnitId, double>& mr1_scores,
                          const MetadataTable& metadata, ModelId model,
                          TieRule tie = TieRule::Low,
                          const std::optional<std::string>& reference_school = std::nullopt);

struct RegressionResult {
    std::vector<std::string> column_names;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd t_values;
    Eigen::VectorXd p_values;
    double r_squared = 0.0;
    double residual_se = 0.0;
    double f_value = 0.0;
    double f_p_value = 1.0;
    int n_obs = 0;
    ModelId model_id = ModelId::M1;
    // filled by bootstrap_ci / cohens_d when the caller runs them
    std::vector<std::pair<double, double>> bootstrap_ci;
    std::optional<double> cohens_d;
    std::optional<std::pair<double, double>> cohens_d_ci;

    double coefficient(std::string_view name) const;
    double p_value(std::string_view name) const;
};

// Ordinary least squares with t-distribution p-values (df = N - k) and the
// overall F test. Throws on N <= k, constant non-intercept columns and rank
// deficiency.
RegressionResult ols_fit(const DesignMatrix& design);

struct InteractionTest {
    std::string covariate;
    double coefficient = 0.0;
    double p_value = 1.0;
};

// Refits the design once per covariate with an added factor x covariate
// term and reports that term's coefficient and p-value.
std::vector<InteractionTest> interaction_scan(const DesignMatrix& design,
                                              const std::string& factor);

struct BootstrapOptions {
    int replicates = 1000;   // >= 100
    double alpha = 0.05;
    std::uint64_t seed = 42;
    bool parallel = true;    // identical results either way
};

struct BootstrapResult {
    std::vector<std::string> column_names;
    std::vector<std::pair<double, double>> ci;  // per column (low, high)
    std::int64_t redraws = 0;                   // rank-deficient resamples replaced
};

// Case bootstrap: rows resampled with replacement, one mt19937_64 stream per
// replicate derived from (seed, replicate). CIs are empirical percentile
// quantiles with inclusive linear interpolation.
BootstrapResult bootstrap_ci(const DesignMatrix& design, const BootstrapOptions& options);

// (mean_a - mean_b) / pooled sd, sample variances with n-1 denominators.
double cohens_d(std::span<const double> a, std::span<const double> b);

}  // namespace tracena
