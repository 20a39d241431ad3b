#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tracena/action_mapper.hpp"
#include "tracena/ena_engine.hpp"
#include "tracena/srl_parser.hpp"
#include "tracena/trace_model.hpp"

// Seeded generator of synthetic trace data with planted group structure.
// Units follow a first-order Markov walk over SRL processes; the raw-trace
// path renders each visited process as a pattern instance and inverts the
// action config back to platform events, so the mapper and parser must
// recover exactly what was planted. This is a test fixture, not a cognitive
// model.

namespace tracena {

struct NormalSpec {
    double mean = 0.0;
    double sd = 0.0;
};

struct GroupProfile {
    std::string name;
    int n_units = 1;
    EducationLevel education_level = EducationLevel::SE;
    std::vector<std::string> school_ids;           // assigned round-robin
    std::pair<int, int> lines_per_unit{1, 1};      // inclusive range
    std::vector<double> initial_distribution;      // length 7, sums to 1
    std::vector<std::vector<double>> transition;   // 7x7, or 8x8 with an unlabelled state
    NormalSpec essay_score;
    NormalSpec pretest_score{7.5, 0.0};
    NormalSpec task_length_minutes{40.0, 0.0};
    std::optional<NormalSpec> cet4_score;          // HE only

    bool has_unlabelled_state() const { return transition.size() == kProcessCount + 1; }
};

struct SynthProfile {
    std::vector<GroupProfile> groups;
    double noise_fraction = 0.0;     // mapped actions that match no pattern
    double unmapped_fraction = 0.0;  // events that match no action rule
    std::vector<std::pair<MainAction, std::string>> noise_actions;
    std::vector<std::string> unmapped_event_kinds;
    std::string user_prefix = "u";
    std::string server_id = "s1";
    bool allow_ambiguous = false;

    int total_units() const {
        int n = 0;
        for (const auto& g : groups) n += g.n_units;
        return n;
    }
};

SynthProfile load_profile(const std::filesystem::path& path);
void validate_profile(const SynthProfile& profile);

struct GeneratedUnit {
    UnitId unit;
    std::string group;
    SessionMetadata metadata;
    std::vector<CodeMask> lines;
};

// One coded line per Markov step; an 8th-state visit yields an empty mask.
// Deterministic under (seed, unit index); units are generated in parallel
// with per-unit derived streams.
std::vector<GeneratedUnit> generate_coded_lines(const SynthProfile& profile, std::uint64_t seed);

struct GeneratedTrace {
    std::vector<TraceEvent> events;  // unit order, timestamps per session
    MetadataTable metadata;
    std::map<UnitId, std::string> group_of;
    // ground truth per unit: the planted process of every emitted action
    // (noise actions carry no entry value and are std::nullopt)
    std::map<UnitId, std::vector<std::optional<SrlProcess>>> planted;
    std::size_t planted_actions = 0;
    std::size_t noise_action_count = 0;
    std::size_t unmapped_event_count = 0;
};

// Renders each planted process as a uniformly chosen matching pattern
// instance, inverted through the action config to raw events. Noise actions
// (mapped, unlabellable) are inserted at instance boundaries; unmapped event
// kinds are woven between events. Refuses pattern libraries where one
// pattern can shadow another planted instance (overlap prefix) unless
// profile.allow_ambiguous is set.
GeneratedTrace generate_raw_trace(const SynthProfile& profile, const PatternLibrary& library,
                                  const ActionConfig& config, std::uint64_t seed);

// True when no pattern's leading matchers can all overlap another pattern
// (the condition under which planted streams re-parse exactly).
bool is_overlap_prefix_free(const PatternLibrary& library);

}  // namespace tracena
