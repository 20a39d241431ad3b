#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tracena/codes.hpp"
#include "tracena/srl_parser.hpp"
#include "tracena/trace_model.hpp"

// Per-unit co-occurrence networks over a moving stanza window, sphere
// normalization, means-rotation embedding, least-squares node placement and
// mean/subtraction networks.
//
// Window semantics: the window of referent line l is the W lines ending at
// and including l (truncated at the conversation start). A referent
// contributes at most 1 to a pair: pair (i, j) fires when one code sits on
// the referent and the other appears anywhere in its window. Self pairs are
// never counted. Accumulation is binary, not weighted.

namespace tracena {

// bit c set <=> SrlProcess c coded on the line
using CodeMask = std::uint32_t;

inline constexpr CodeMask code_bit(SrlProcess p) {
    return CodeMask{1} << static_cast<unsigned>(p);
}

struct CodedUnit {
    UnitId unit;
    std::vector<CodeMask> lines;  // position = line index within the conversation
};

struct AdjacencyVector {
    UnitId unit;
    std::array<std::int64_t, kPairCount> raw{};
    std::array<double, kPairCount> normalized{};

    std::int64_t raw_total() const {
        std::int64_t t = 0;
        for (const auto v : raw) t += v;
        return t;
    }
    bool is_zero() const { return raw_total() == 0; }
};

// Lines for one unit, one per labelled action; unlabelled actions occupy a
// line with an empty mask unless drop_unlabelled is set.
CodedUnit coded_unit_from_labels(UnitId unit, std::span<const LabelledAction> labelled,
                                 bool drop_unlabelled = false);

// Moving stanza accumulation for a single conversation. window >= 1.
AdjacencyVector accumulate(const CodedUnit& unit, int window);

// OpenMP across units; the serial variant is the reference path kept for
// tests and the benchmark. Outputs are identical.
std::vector<AdjacencyVector> accumulate_all(std::span<const CodedUnit> units, int window);
std::vector<AdjacencyVector> accumulate_all_serial(std::span<const CodedUnit> units, int window);

struct CenteredData {
    Eigen::MatrixXd normalized;  // N x 21, sphere-normalized rows
    Eigen::VectorXd grand_mean;  // column mean of `normalized`
    Eigen::MatrixXd centered;    // normalized - grand_mean per row
};

// Requires >= 2 units and at least one nonzero vector.
CenteredData normalize_and_center(std::span<const AdjacencyVector> vectors);

struct EnaSpace {
    Eigen::MatrixXd basis;               // 21 x D, column 0 = MR1, orthonormal
    Eigen::VectorXd grand_mean;          // copied from the centering step
    Eigen::VectorXd variance_explained;  // per dimension, sums to 1 over the full basis
    Eigen::MatrixXd scores;              // N x D (all rows, including projection-only ones)
    std::vector<std::size_t> projected_only;  // rows excluded from fitting, flagged
};

// groups[i]: 0 = group A, 1 = group B, -1 = exclude from fitting but project
// for scores (degenerate zero-network units). MR1 is the normalized
// difference of group mean rows; remaining dimensions come from the SVD of
// the deflated fitted rows. Throws DegenerateRotationError when the group
// means coincide (callers may fall back to a plain SVD space).
EnaSpace means_rotation(const CenteredData& data, const std::vector<int>& groups);

struct DimensionFit {
    std::optional<double> pearson;
    std::optional<double> spearman;
};

struct NodeFit {
    Eigen::MatrixXd node_positions;          // 7 x D
    std::vector<DimensionFit> goodness_of_fit;  // per dimension
    std::vector<std::size_t> excluded_units;    // zero-total units left out of the fit
};

// Least-squares co-registration: minimum-norm x per dimension minimizing
// sum_u (C_u(x) - score_ud)^2 with C_u(x) = sum_{i<j} w_u,ij (x_i + x_j) / 2,
// where w_u is the unit's raw vector scaled to sum 1.
NodeFit fit_node_positions(const EnaSpace& space, std::span<const AdjacencyVector> vectors);

struct MeanNetwork {
    std::string group_id;
    std::array<double, kPairCount> edge_weights{};
    int member_count = 0;
};

MeanNetwork mean_network(std::span<const AdjacencyVector> vectors,
                         std::span<const std::size_t> members, std::string group_id);

struct SubtractionNetwork {
    std::string group_a;
    std::string group_b;
    std::array<double, kPairCount> signed_weights{};  // mean_a - mean_b
};

SubtractionNetwork subtract_networks(const MeanNetwork& a, const MeanNetwork& b);

}  // namespace tracena
