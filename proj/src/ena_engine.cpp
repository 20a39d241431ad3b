#include "tracena/ena_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "tracena/error.hpp"

namespace tracena {

CodedUnit coded_unit_from_labels(UnitId unit, std::span<const LabelledAction> labelled,
                                 bool drop_unlabelled) {
    CodedUnit coded{std::move(unit), {}};
    coded.lines.reserve(labelled.size());
    for (const LabelledAction& la : labelled) {
        if (la.process) {
            coded.lines.push_back(code_bit(*la.process));
        } else if (!drop_unlabelled) {
            coded.lines.push_back(0);
        }
    }
    return coded;
}

AdjacencyVector accumulate(const CodedUnit& unit, int window) {
    if (window < 1) throw Error("accumulate: window must be >= 1");

    AdjacencyVector adj;
    adj.unit = unit.unit;

    std::array<std::ptrdiff_t, kProcessCount> last_seen;
    last_seen.fill(-1);

    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(unit.lines.size());
    for (std::ptrdiff_t line = 0; line < n; ++line) {
        const CodeMask mask = unit.lines[line];
        for (int c = 0; c < kProcessCount; ++c) {
            if (mask >> c & 1u) last_seen[c] = line;
        }
        if (!mask) continue;

        // window truncates at the conversation start, so the -1 sentinel in
        // last_seen can never sit inside it
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, line - window + 1);
        CodeMask hits = 0;  // pair bits touched by this referent, binary per referent
        for (int c = 0; c < kProcessCount; ++c) {
            if (!(mask >> c & 1u)) continue;
            for (int d = 0; d < kProcessCount; ++d) {
                if (d != c && last_seen[d] >= lo) {
                    hits |= CodeMask{1} << pair_index(c, d);
                }
            }
        }
        while (hits) {
            adj.raw[std::countr_zero(hits)] += 1;
            hits &= hits - 1;
        }
    }

    double sumsq = 0.0;
    for (const auto v : adj.raw) sumsq += static_cast<double>(v) * static_cast<double>(v);
    if (sumsq > 0.0) {
        const double inv = 1.0 / std::sqrt(sumsq);
        for (int p = 0; p < kPairCount; ++p) {
            adj.normalized[p] = static_cast<double>(adj.raw[p]) * inv;
        }
    }
    return adj;
}

std::vector<AdjacencyVector> accumulate_all(std::span<const CodedUnit> units, int window) {
    if (window < 1) throw Error("accumulate: window must be >= 1");
    std::vector<AdjacencyVector> out(units.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(units.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[i] = accumulate(units[i], window);
    }
    return out;
}

std::vector<AdjacencyVector> accumulate_all_serial(std::span<const CodedUnit> units, int window) {
    std::vector<AdjacencyVector> out;
    out.reserve(units.size());
    for (const CodedUnit& unit : units) out.push_back(accumulate(unit, window));
    return out;
}

CenteredData normalize_and_center(std::span<const AdjacencyVector> vectors) {
    const std::size_t n = vectors.size();
    if (n < 2) throw Error("normalize_and_center: need at least 2 units");

    CenteredData data;
    data.normalized.resize(static_cast<Eigen::Index>(n), kPairCount);
    bool any_nonzero = false;
    for (std::size_t i = 0; i < n; ++i) {
        for (int p = 0; p < kPairCount; ++p) {
            data.normalized(static_cast<Eigen::Index>(i), p) = vectors[i].normalized[p];
        }
        any_nonzero = any_nonzero || !vectors[i].is_zero();
    }
    if (!any_nonzero) throw Error("normalize_and_center: all units have empty networks");

    data.grand_mean = data.normalized.colwise().mean();
    data.centered = data.normalized.rowwise() - data.grand_mean.transpose();
    return data;
}

namespace {

// Flips each column so its largest-magnitude entry is positive; SVD signs
// are otherwise arbitrary.
void fix_column_signs(Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        Eigen::Index at = 0;
        m.col(c).cwiseAbs().maxCoeff(&at);
        if (m(at, c) < 0) m.col(c) = -m.col(c);
    }
}

double sample_variance(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

EnaSpace means_rotation(const CenteredData& data, const std::vector<int>& groups) {
    const Eigen::MatrixXd& centered = data.centered;
    if (static_cast<std::size_t>(centered.rows()) != groups.size()) {
        throw Error("means_rotation: group assignment size mismatch");
    }

    std::vector<Eigen::Index> fit_rows;
    Eigen::RowVectorXd mean_a = Eigen::RowVectorXd::Zero(kPairCount);
    Eigen::RowVectorXd mean_b = Eigen::RowVectorXd::Zero(kPairCount);
    std::size_t n_a = 0, n_b = 0;
    EnaSpace space;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (groups[i] == 0) {
            mean_a += centered.row(row);
            ++n_a;
            fit_rows.push_back(row);
        } else if (groups[i] == 1) {
            mean_b += centered.row(row);
            ++n_b;
            fit_rows.push_back(row);
        } else {
            space.projected_only.push_back(i);
        }
    }
    if (n_a == 0 || n_b == 0) throw Error("means_rotation: a group is empty");
    mean_a /= static_cast<double>(n_a);
    mean_b /= static_cast<double>(n_b);

    Eigen::VectorXd v1 = (mean_a - mean_b).transpose();
    const double v1_norm = v1.norm();
    if (v1_norm <= 1e-12) {
        throw DegenerateRotationError(
            "means_rotation: group means are identical; no rotation axis exists. "
            "Fall back to a plain SVD space.");
    }
    v1 /= v1_norm;

    Eigen::MatrixXd fitted(static_cast<Eigen::Index>(fit_rows.size()), kPairCount);
    for (std::size_t i = 0; i < fit_rows.size(); ++i) {
        fitted.row(static_cast<Eigen::Index>(i)) = centered.row(fit_rows[i]);
    }

    // numerical rank of the fitted data decides the full basis size
    Eigen::BDCSVD<Eigen::MatrixXd> svd_full(fitted);
    const Eigen::VectorXd& sv = svd_full.singularValues();
    const double tol = sv.size() == 0
                           ? 0.0
                           : sv(0) * std::numeric_limits<double>::epsilon() *
                                 static_cast<double>(std::max<Eigen::Index>(fitted.rows(),
                                                                            fitted.cols()));
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol) ++rank;
    }
    if (rank < 1) throw Error("means_rotation: fitted data has rank 0");

    // deflate the rotation axis, then take the remaining directions from the
    // right-singular structure of the residual
    const Eigen::MatrixXd deflated = fitted - (fitted * v1) * v1.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(deflated, Eigen::ComputeThinV);
    Eigen::MatrixXd rest = svd.matrixV().leftCols(std::min<Eigen::Index>(rank - 1, svd.matrixV().cols()));
    fix_column_signs(rest);

    space.basis.resize(kPairCount, 1 + rest.cols());
    space.basis.col(0) = v1;
    space.basis.rightCols(rest.cols()) = rest;
    space.grand_mean = data.grand_mean;
    space.scores = centered * space.basis;

    const Eigen::MatrixXd fitted_scores = fitted * space.basis;
    double total_variance = 0.0;
    for (int p = 0; p < kPairCount; ++p) total_variance += sample_variance(fitted.col(p));
    space.variance_explained.resize(space.basis.cols());
    for (Eigen::Index d = 0; d < space.basis.cols(); ++d) {
        space.variance_explained(d) = sample_variance(fitted_scores.col(d)) / total_variance;
    }
    return space;
}

namespace {

std::vector<double> average_ranks(const Eigen::VectorXd& v) {
    const std::size_t n = static_cast<std::size_t>(v.size());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v(static_cast<Eigen::Index>(a)) <
                                                         v(static_cast<Eigen::Index>(b)); });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v(static_cast<Eigen::Index>(order[j + 1])) ==
                                v(static_cast<Eigen::Index>(order[i]))) {
            ++j;
        }
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double mx = x.mean();
    const double my = y.mean();
    const Eigen::ArrayXd dx = x.array() - mx;
    const Eigen::ArrayXd dy = y.array() - my;
    const double sxx = (dx * dx).sum();
    const double syy = (dy * dy).sum();
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return (dx * dy).sum() / std::sqrt(sxx * syy);
}

std::optional<double> spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    Eigen::VectorXd vx = Eigen::Map<const Eigen::VectorXd>(rx.data(), static_cast<Eigen::Index>(rx.size()));
    Eigen::VectorXd vy = Eigen::Map<const Eigen::VectorXd>(ry.data(), static_cast<Eigen::Index>(ry.size()));
    return pearson(vx, vy);
}

}  // namespace

NodeFit fit_node_positions(const EnaSpace& space, std::span<const AdjacencyVector> vectors) {
    if (static_cast<Eigen::Index>(vectors.size()) != space.scores.rows()) {
        throw Error("fit_node_positions: vector count does not match score rows");
    }

    NodeFit fit;
    std::vector<Eigen::Index> included;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].is_zero()) {
            fit.excluded_units.push_back(i);
        } else {
            included.push_back(static_cast<Eigen::Index>(i));
        }
    }
    if (included.size() < 2) {
        throw Error("fit_node_positions: fewer than 2 units with nonzero totals");
    }

    // design row u: column k collects half the unit's relative weight on
    // every pair incident to node k
    Eigen::MatrixXd design =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(included.size()), kProcessCount);
    Eigen::MatrixXd responses(static_cast<Eigen::Index>(included.size()), space.scores.cols());
    for (std::size_t u = 0; u < included.size(); ++u) {
        const AdjacencyVector& vec = vectors[static_cast<std::size_t>(included[u])];
        const double total = static_cast<double>(vec.raw_total());
        for (int p = 0; p < kPairCount; ++p) {
            if (vec.raw[p] == 0) continue;
            const double w = static_cast<double>(vec.raw[p]) / total;
            const auto [i, j] = pair_codes(p);
            design(static_cast<Eigen::Index>(u), i) += 0.5 * w;
            design(static_cast<Eigen::Index>(u), j) += 0.5 * w;
        }
        responses.row(static_cast<Eigen::Index>(u)) = space.scores.row(included[u]);
    }

    // minimum-norm least squares, deterministic under rank deficiency
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    fit.node_positions = cod.solve(responses);

    const Eigen::MatrixXd centroids = design * fit.node_positions;
    fit.goodness_of_fit.resize(static_cast<std::size_t>(space.scores.cols()));
    for (Eigen::Index d = 0; d < space.scores.cols(); ++d) {
        fit.goodness_of_fit[static_cast<std::size_t>(d)] =
            DimensionFit{pearson(centroids.col(d), responses.col(d)),
                         spearman(centroids.col(d), responses.col(d))};
    }
    return fit;
}

MeanNetwork mean_network(std::span<const AdjacencyVector> vectors,
                         std::span<const std::size_t> members, std::string group_id) {
    if (members.empty()) throw Error("mean_network: group \"" + group_id + "\" is empty");
    MeanNetwork net;
    net.group_id = std::move(group_id);
    net.member_count = static_cast<int>(members.size());
    for (const std::size_t m : members) {
        if (m >= vectors.size()) throw Error("mean_network: member index out of range");
        for (int p = 0; p < kPairCount; ++p) net.edge_weights[p] += vectors[m].normalized[p];
    }
    for (int p = 0; p < kPairCount; ++p) {
        net.edge_weights[p] /= static_cast<double>(net.member_count);
    }
    return net;
}

SubtractionNetwork subtract_networks(const MeanNetwork& a, const MeanNetwork& b) {
    SubtractionNetwork sub;
    sub.group_a = a.group_id;
    sub.group_b = b.group_id;
    for (int p = 0; p < kPairCount; ++p) {
        sub.signed_weights[p] = a.edge_weights[p] - b.edge_weights[p];
    }
    return sub;
}

}  // namespace tracena
