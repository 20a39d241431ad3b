#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// Closed vocabularies of the pipeline: the seven main actions of the action
// library and the seven SRL process codes. The declaration order of
// SrlProcess is the canonical code order used by every vector layout
// downstream (adjacency vectors, bases, rendered networks).

namespace tracena {

enum class MainAction : std::uint8_t {
    Annotation,
    Essay,
    Instruction,
    Navigation,
    Planner,
    Reading,
    Timer,
};

inline constexpr int kMainActionCount = 7;

enum class SrlProcess : std::uint8_t {
    Orientation,
    Planning,
    Monitoring,
    Evaluation,
    FirstReading,
    ReReading,
    ElaborationOrganisation,
};

inline constexpr int kProcessCount = 7;

// Unordered code pairs (i, j), i < j, laid out as the row-major upper
// triangle: (0,1), (0,2), ..., (0,6), (1,2), ..., (5,6).
inline constexpr int kPairCount = kProcessCount * (kProcessCount - 1) / 2;

std::string_view to_string(MainAction a);
std::string_view to_string(SrlProcess p);

std::optional<MainAction> parse_main_action(std::string_view token);
std::optional<SrlProcess> parse_srl_process(std::string_view token);

// Throwing variants used by file loaders; the message names the bad token.
MainAction require_main_action(std::string_view token);
SrlProcess require_srl_process(std::string_view token);

constexpr int pair_index(int i, int j) {
    if (i > j) {
        const int t = i;
        i = j;
        j = t;
    }
    // offset of row i in the upper triangle, then the column within the row
    return i * kProcessCount - i * (i + 1) / 2 + (j - i - 1);
}

constexpr std::array<int, 2> pair_codes(int index) {
    int i = 0;
    int row_len = kProcessCount - 1;
    while (index >= row_len) {
        index -= row_len;
        --row_len;
        ++i;
    }
    return {i, i + 1 + index};
}

// "ReReading--ElaborationOrganisation" style label for reports.
std::string pair_name(int index);

}  // namespace tracena
