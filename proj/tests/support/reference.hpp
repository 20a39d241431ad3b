#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tracena/action_mapper.hpp"
#include "tracena/codes.hpp"
#include "tracena/ena_engine.hpp"
#include "tracena/srl_parser.hpp"

// Test-only brute-force references. These deliberately re-derive the specified
// behaviour by direct enumeration and share no code with the optimized paths
// they check.

namespace tracena::reference {

// Window co-occurrence by explicit enumeration of every referent's window.
std::array<std::int64_t, kPairCount> accumulate_brute_force(std::span<const CodeMask> lines,
                                                            int window);

struct BruteLabel {
    std::optional<SrlProcess> process;
    std::optional<std::string> pattern_id;
    std::optional<int> position;
};

// Greedy labelling that scans every pattern at every cursor and picks the
// longest match, ties by source_rank. `patterns` is taken in file order.
std::vector<BruteLabel> label_brute_force(std::span<const Action> actions,
                                          std::span<const Pattern> patterns);

struct OlsOracle {
    std::vector<double> beta;
    std::vector<double> se;
    double r_squared = 0.0;
};

// Normal equations solved with hand-rolled Gauss-Jordan elimination.
OlsOracle ols_normal_equations(const std::vector<std::vector<double>>& x,
                               const std::vector<double>& y);

}  // namespace tracena::reference
