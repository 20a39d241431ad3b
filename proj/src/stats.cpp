#include "tracena/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "tracena/error.hpp"
#include "tracena/rng.hpp"

namespace tracena {

std::string_view to_string(PerfGroup g) { return g == PerfGroup::High ? "high" : "low"; }

TieRule parse_tie_rule(std::string_view token) {
    if (token == "low") return TieRule::Low;
    if (token == "high") return TieRule::High;
    throw ParseError("unknown tie rule \"" + std::string(token) + "\" (expected low|high)");
}

std::string_view to_string(ModelId m) {
    switch (m) {
        case ModelId::M1: return "M1";
        case ModelId::M2: return "M2";
        default: return "M3";
    }
}

ModelId parse_model_id(std::string_view token) {
    if (token == "M1") return ModelId::M1;
    if (token == "M2") return ModelId::M2;
    if (token == "M3") return ModelId::M3;
    throw ParseError("unknown model \"" + std::string(token) + "\" (expected M1|M2|M3)");
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::map<UnitId, PerfGroup> median_split(const std::map<UnitId, double>& scores, TieRule tie) {
    if (scores.size() < 2) throw Error("median_split: need at least 2 units");
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& [unit, score] : scores) values.push_back(score);
    const double m = median(std::move(values));

    std::map<UnitId, PerfGroup> groups;
    for (const auto& [unit, score] : scores) {
        PerfGroup g;
        if (score > m) {
            g = PerfGroup::High;
        } else if (score < m) {
            g = PerfGroup::Low;
        } else {
            g = tie == TieRule::Low ? PerfGroup::Low : PerfGroup::High;
        }
        groups.emplace(unit, g);
    }
    return groups;
}

int DesignMatrix::column(std::string_view name) const {
    for (std::size_t i = 0; i < column_names.size(); ++i) {
        if (column_names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

double RegressionResult::coefficient(std::string_view name) const {
    for (std::size_t i = 0; i < column_names.size(); ++i) {
        if (column_names[i] == name) return coefficients(static_cast<Eigen::Index>(i));
    }
    throw Error("no coefficient named \"" + std::string(name) + "\"");
}

double RegressionResult::p_value(std::string_view name) const {
    for (std::size_t i = 0; i < column_names.size(); ++i) {
        if (column_names[i] == name) return p_values(static_cast<Eigen::Index>(i));
    }
    throw Error("no coefficient named \"" + std::string(name) + "\"");
}

DesignMatrix build_design(const std::map<UnitId, double>& mr1_scores,
                          const MetadataTable& metadata, ModelId model, TieRule tie,
                          const std::optional<std::string>& reference_school) {
    if (mr1_scores.empty()) throw Error("build_design: no scores");

    // performance split runs within each education level, over the units
    // present in the score table
    std::map<UnitId, double> essay_se, essay_he;
    for (const auto& [unit, score] : mr1_scores) {
        const auto meta = metadata.find(unit);
        if (meta == metadata.end()) {
            throw Error("build_design: no metadata for " + unit.label());
        }
        (meta->second.education_level == EducationLevel::SE ? essay_se : essay_he)
            .emplace(unit, meta->second.essay_score);
    }
    std::map<UnitId, PerfGroup> perf;
    if (!essay_se.empty()) perf.merge(median_split(essay_se, tie));
    if (!essay_he.empty()) perf.merge(median_split(essay_he, tie));

    std::vector<std::string> names;
    switch (model) {
        case ModelId::M1:
            if (!reference_school) {
                throw Error(
                    "build_design: model M1 needs an explicit reference school "
                    "(--reference-school); it is never guessed");
            }
            names = {"intercept", "performance_low", "school_1", "pretest_score", "task_length"};
            break;
        case ModelId::M2:
            names = {"intercept", "performance_low", "cet4_score", "pretest_score", "task_length"};
            break;
        case ModelId::M3:
            names = {"intercept", "performance_low", "level_SE", "pretest_score"};
            break;
    }

    DesignMatrix design;
    design.model_id = model;
    design.column_names = names;
    design.response.resize(static_cast<Eigen::Index>(mr1_scores.size()));
    design.columns.resize(static_cast<Eigen::Index>(mr1_scores.size()),
                          static_cast<Eigen::Index>(names.size()));

    Eigen::Index row = 0;
    for (const auto& [unit, score] : mr1_scores) {
        const SessionMetadata& meta = metadata.at(unit);
        design.units.push_back(unit);
        design.response(row) = score;
        for (std::size_t c = 0; c < names.size(); ++c) {
            double value = 0.0;
            const std::string& name = names[c];
            if (name == "intercept") {
                value = 1.0;
            } else if (name == "performance_low") {
                value = perf.at(unit) == PerfGroup::Low ? 1.0 : 0.0;
            } else if (name == "school_1") {
                value = meta.school_id == *reference_school ? 0.0 : 1.0;
            } else if (name == "cet4_score") {
                if (!meta.cet4_score) {
                    throw Error("build_design: unit " + unit.label() +
                                " has no cet4_score required by model M2");
                }
                value = *meta.cet4_score;
            } else if (name == "level_SE") {
                value = meta.education_level == EducationLevel::SE ? 1.0 : 0.0;
            } else if (name == "pretest_score") {
                value = meta.pretest_score;
            } else if (name == "task_length") {
                value = meta.task_length_minutes;
            }
            design.columns(row, static_cast<Eigen::Index>(c)) = value;
        }
        ++row;
    }
    return design;
}

namespace {

void validate_design(const DesignMatrix& design) {
    const Eigen::Index n = design.n();
    const Eigen::Index k = design.k();
    if (static_cast<std::size_t>(k) != design.column_names.size()) {
        throw Error("design: column names do not match column count");
    }
    if (n <= k) {
        throw Error("design: need more observations (" + std::to_string(n) +
                    ") than columns (" + std::to_string(k) + ")");
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        if (design.column_names[static_cast<std::size_t>(c)] == "intercept") continue;
        const double lo = design.columns.col(c).minCoeff();
        const double hi = design.columns.col(c).maxCoeff();
        if (lo == hi) {
            throw Error("design: column \"" + design.column_names[static_cast<std::size_t>(c)] +
                        "\" is constant");
        }
    }
}

// Solves one resampled system; returns false on rank deficiency.
bool solve_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd& beta) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) return false;
    beta = qr.solve(y);
    return true;
}

}  // namespace

RegressionResult ols_fit(const DesignMatrix& design) {
    validate_design(design);
    const Eigen::Index n = design.n();
    const Eigen::Index k = design.k();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.columns);
    if (qr.rank() < k) throw Error("ols_fit: design matrix is rank deficient");

    RegressionResult result;
    result.model_id = design.model_id;
    result.column_names = design.column_names;
    result.n_obs = static_cast<int>(n);
    result.coefficients = qr.solve(design.response);

    const Eigen::VectorXd residuals = design.response - design.columns * result.coefficients;
    const double rss = residuals.squaredNorm();
    const double df = static_cast<double>(n - k);
    const double sigma2 = rss / df;
    result.residual_se = std::sqrt(sigma2);

    const Eigen::MatrixXd xtx_inv =
        (design.columns.transpose() * design.columns)
            .ldlt()
            .solve(Eigen::MatrixXd::Identity(k, k));

    result.standard_errors.resize(k);
    result.t_values.resize(k);
    result.p_values.resize(k);
    const boost::math::students_t t_dist(df);
    for (Eigen::Index c = 0; c < k; ++c) {
        result.standard_errors(c) = std::sqrt(sigma2 * xtx_inv(c, c));
        result.t_values(c) = result.coefficients(c) / result.standard_errors(c);
        result.p_values(c) =
            2.0 * boost::math::cdf(boost::math::complement(t_dist, std::abs(result.t_values(c))));
    }

    const double mean_y = design.response.mean();
    const double tss = (design.response.array() - mean_y).square().sum();
    result.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;

    const double model_df = static_cast<double>(k - 1);
    if (model_df > 0 && rss > 0) {
        result.f_value = ((tss - rss) / model_df) / (rss / df);
        const boost::math::fisher_f f_dist(model_df, df);
        result.f_p_value = boost::math::cdf(boost::math::complement(f_dist, result.f_value));
    } else {
        result.f_value = std::numeric_limits<double>::infinity();
        result.f_p_value = 0.0;
    }
    return result;
}

std::vector<InteractionTest> interaction_scan(const DesignMatrix& design,
                                              const std::string& factor) {
    const int factor_col = design.column(factor);
    if (factor_col < 0) throw Error("interaction_scan: no column named \"" + factor + "\"");

    std::vector<InteractionTest> tests;
    for (Eigen::Index c = 0; c < design.k(); ++c) {
        const std::string& name = design.column_names[static_cast<std::size_t>(c)];
        if (name == "intercept" || name == factor) continue;

        DesignMatrix augmented = design;
        const std::string term = factor + ":" + name;
        augmented.column_names.push_back(term);
        augmented.columns.conservativeResize(design.n(), design.k() + 1);
        augmented.columns.col(design.k()) =
            design.columns.col(factor_col).cwiseProduct(design.columns.col(c));

        const RegressionResult fit = ols_fit(augmented);
        tests.push_back(InteractionTest{name, fit.coefficient(term), fit.p_value(term)});
    }
    return tests;
}

namespace {

// Inclusive linear-interpolation quantile over a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

BootstrapResult bootstrap_ci(const DesignMatrix& design, const BootstrapOptions& options) {
    validate_design(design);
    if (options.replicates < 100) throw Error("bootstrap_ci: need at least 100 replicates");
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
        throw Error("bootstrap_ci: alpha must be in (0, 1)");
    }

    const Eigen::Index n = design.n();
    const Eigen::Index k = design.k();
    const int b_total = options.replicates;
    const std::int64_t redraw_budget = 10LL * b_total;

    Eigen::MatrixXd draws(b_total, k);
    std::vector<std::int64_t> redraws_per_rep(static_cast<std::size_t>(b_total), 0);
    std::atomic<bool> overrun{false};

#pragma omp parallel for schedule(dynamic) if (options.parallel)
    for (int b = 0; b < b_total; ++b) {
        auto stream = rng::make_stream(options.seed, static_cast<std::uint64_t>(b));
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        Eigen::VectorXd beta;
        std::int64_t attempts = 0;
        while (true) {
            for (Eigen::Index r = 0; r < n; ++r) {
                const auto pick = static_cast<Eigen::Index>(
                    rng::uniform_index(stream, static_cast<std::size_t>(n)));
                x.row(r) = design.columns.row(pick);
                y(r) = design.response(pick);
            }
            if (solve_ols(x, y, beta)) break;
            if (++attempts > redraw_budget) {
                overrun.store(true);
                beta = Eigen::VectorXd::Zero(k);
                break;
            }
        }
        redraws_per_rep[static_cast<std::size_t>(b)] = attempts;
        draws.row(b) = beta.transpose();
    }

    BootstrapResult result;
    result.column_names = design.column_names;
    for (const auto r : redraws_per_rep) result.redraws += r;
    if (overrun.load() || result.redraws > redraw_budget) {
        throw Error("bootstrap_ci: persistent rank deficiency after " +
                    std::to_string(result.redraws) + " redraws");
    }

    const double q_low = options.alpha / 2.0;
    const double q_high = 1.0 - options.alpha / 2.0;
    std::vector<double> sorted(static_cast<std::size_t>(b_total));
    for (Eigen::Index c = 0; c < k; ++c) {
        for (int b = 0; b < b_total; ++b) sorted[static_cast<std::size_t>(b)] = draws(b, c);
        std::sort(sorted.begin(), sorted.end());
        result.ci.emplace_back(quantile_sorted(sorted, q_low), quantile_sorted(sorted, q_high));
    }
    return result;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw Error("cohens_d: both groups need >= 2 values");

    auto mean_of = [](std::span<const double> v) {
        double s = 0.0;
        for (const double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto var_of = [](std::span<const double> v, double mean) {
        double s = 0.0;
        for (const double x : v) s += (x - mean) * (x - mean);
        return s / static_cast<double>(v.size() - 1);
    };

    const double mean_a = mean_of(a);
    const double mean_b = mean_of(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double pooled =
        std::sqrt(((na - 1.0) * var_of(a, mean_a) + (nb - 1.0) * var_of(b, mean_b)) /
                  (na + nb - 2.0));
    if (pooled == 0.0) throw Error("cohens_d: pooled standard deviation is zero");
    return (mean_a - mean_b) / pooled;
}

}  // namespace tracena
