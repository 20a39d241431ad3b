#include "tracena/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tracena/error.hpp"
#include "tracena/rng.hpp"

namespace tracena {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kStochasticTol = 1e-9;

NormalSpec parse_normal(const ordered_json& j) {
    return NormalSpec{j.at("mean").get<double>(), j.at("sd").get<double>()};
}

int sample_categorical(std::mt19937_64& stream, const std::vector<double>& weights) {
    const double u = rng::uniform_unit(stream);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

SessionMetadata sample_metadata(const GroupProfile& group, int unit_in_group,
                                std::mt19937_64& stream) {
    SessionMetadata meta;
    meta.education_level = group.education_level;
    if (!group.school_ids.empty()) {
        meta.school_id = group.school_ids[static_cast<std::size_t>(unit_in_group) %
                                          group.school_ids.size()];
    }
    meta.essay_score =
        clamp(rng::normal(stream, group.essay_score.mean, group.essay_score.sd), 0.0, 1e9);
    meta.pretest_score =
        clamp(rng::normal(stream, group.pretest_score.mean, group.pretest_score.sd), 0.0, 15.0);
    meta.task_length_minutes = std::max(
        rng::normal(stream, group.task_length_minutes.mean, group.task_length_minutes.sd), 1.0);
    if (group.cet4_score) {
        meta.cet4_score = rng::normal(stream, group.cet4_score->mean, group.cet4_score->sd);
    }
    return meta;
}

std::string unit_user_id(const SynthProfile& profile, int global_index) {
    std::string idx = std::to_string(global_index);
    while (idx.size() < 3) idx.insert(idx.begin(), '0');
    return profile.user_prefix + idx;
}

}  // namespace

SynthProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open \"" + path.string() + "\"");
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const std::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }

    SynthProfile profile;
    try {
        for (const auto& g : doc.at("groups")) {
            GroupProfile group;
            group.name = g.at("name").get<std::string>();
            group.n_units = g.at("n_units").get<int>();
            group.education_level =
                require_education_level(g.value("education_level", std::string("SE")));
            if (g.contains("schools")) {
                for (const auto& s : g.at("schools")) {
                    group.school_ids.push_back(s.get<std::string>());
                }
            }
            const auto& range = g.at("lines_per_unit");
            group.lines_per_unit = {range.at(0).get<int>(), range.at(1).get<int>()};
            group.initial_distribution = g.at("initial_distribution").get<std::vector<double>>();
            for (const auto& row : g.at("transition_matrix")) {
                group.transition.push_back(row.get<std::vector<double>>());
            }
            group.essay_score = parse_normal(g.at("essay_score"));
            if (g.contains("pretest_score")) group.pretest_score = parse_normal(g.at("pretest_score"));
            if (g.contains("task_length_minutes")) {
                group.task_length_minutes = parse_normal(g.at("task_length_minutes"));
            }
            if (g.contains("cet4_score")) group.cet4_score = parse_normal(g.at("cet4_score"));
            profile.groups.push_back(std::move(group));
        }
        profile.noise_fraction = doc.value("noise_fraction", 0.0);
        profile.unmapped_fraction = doc.value("unmapped_fraction", 0.0);
        if (doc.contains("noise_actions")) {
            for (const auto& item : doc.at("noise_actions")) {
                profile.noise_actions.emplace_back(
                    require_main_action(item.at("main").get<std::string>()),
                    item.at("sub").get<std::string>());
            }
        }
        if (doc.contains("unmapped_event_kinds")) {
            for (const auto& kind : doc.at("unmapped_event_kinds")) {
                profile.unmapped_event_kinds.push_back(kind.get<std::string>());
            }
        }
        profile.user_prefix = doc.value("user_prefix", std::string("u"));
        profile.server_id = doc.value("server_id", std::string("s1"));
        profile.allow_ambiguous = doc.value("allow_ambiguous", false);
    } catch (const ordered_json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    validate_profile(profile);
    return profile;
}

void validate_profile(const SynthProfile& profile) {
    if (profile.groups.empty()) throw Error("profile: no groups");
    for (const auto& group : profile.groups) {
        if (group.name.empty()) throw Error("profile: group with empty name");
        if (group.n_units < 1) throw Error("profile: group \"" + group.name + "\": n_units < 1");
        if (group.lines_per_unit.first < 1 ||
            group.lines_per_unit.second < group.lines_per_unit.first) {
            throw Error("profile: group \"" + group.name + "\": bad lines_per_unit range");
        }
        const std::size_t states = group.transition.size();
        if (states != kProcessCount && states != kProcessCount + 1) {
            throw Error("profile: group \"" + group.name + "\": transition matrix must be 7x7 or 8x8");
        }
        for (const auto& row : group.transition) {
            if (row.size() != states) {
                throw Error("profile: group \"" + group.name + "\": transition matrix is not square");
            }
            double sum = 0.0;
            for (const double v : row) {
                if (v < 0.0) {
                    throw Error("profile: group \"" + group.name + "\": negative transition entry");
                }
                sum += v;
            }
            if (std::abs(sum - 1.0) > kStochasticTol) {
                throw Error("profile: group \"" + group.name + "\": transition row sums to " +
                            std::to_string(sum) + ", expected 1");
            }
        }
        if (group.initial_distribution.size() != kProcessCount) {
            throw Error("profile: group \"" + group.name + "\": initial distribution must have 7 entries");
        }
        double init_sum = 0.0;
        for (const double v : group.initial_distribution) {
            if (v < 0.0) throw Error("profile: group \"" + group.name + "\": negative initial entry");
            init_sum += v;
        }
        if (std::abs(init_sum - 1.0) > kStochasticTol) {
            throw Error("profile: group \"" + group.name + "\": initial distribution sums to " +
                        std::to_string(init_sum) + ", expected 1");
        }
        if (group.cet4_score && group.education_level != EducationLevel::HE) {
            throw Error("profile: group \"" + group.name + "\": cet4_score is only valid for HE");
        }
    }
    if (profile.noise_fraction < 0.0 || profile.noise_fraction >= 1.0) {
        throw Error("profile: noise_fraction must be in [0, 1)");
    }
    if (profile.unmapped_fraction < 0.0 || profile.unmapped_fraction >= 1.0) {
        throw Error("profile: unmapped_fraction must be in [0, 1)");
    }
}

namespace {

// Markov walk shared by both generators; emits `steps` states.
std::vector<int> walk_chain(const GroupProfile& group, std::mt19937_64& stream, int steps) {
    std::vector<int> states;
    states.reserve(static_cast<std::size_t>(steps));
    std::vector<double> initial = group.initial_distribution;
    if (group.has_unlabelled_state()) initial.push_back(0.0);
    int state = sample_categorical(stream, initial);
    for (int i = 0; i < steps; ++i) {
        states.push_back(state);
        state = sample_categorical(stream, group.transition[static_cast<std::size_t>(state)]);
    }
    return states;
}

}  // namespace

std::vector<GeneratedUnit> generate_coded_lines(const SynthProfile& profile, std::uint64_t seed) {
    validate_profile(profile);

    std::vector<std::pair<const GroupProfile*, int>> slots;  // (group, index within group)
    for (const auto& group : profile.groups) {
        for (int u = 0; u < group.n_units; ++u) slots.emplace_back(&group, u);
    }

    std::vector<GeneratedUnit> units(slots.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(slots.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& [group, in_group] = slots[static_cast<std::size_t>(i)];
        auto stream = rng::make_stream(seed, static_cast<std::uint64_t>(i));

        GeneratedUnit unit;
        unit.unit = {unit_user_id(profile, static_cast<int>(i)), profile.server_id};
        unit.group = group->name;
        unit.metadata = sample_metadata(*group, in_group, stream);

        const int span = group->lines_per_unit.second - group->lines_per_unit.first + 1;
        const int steps = group->lines_per_unit.first +
                          static_cast<int>(rng::uniform_index(stream, static_cast<std::size_t>(span)));
        for (const int state : walk_chain(*group, stream, steps)) {
            unit.lines.push_back(state < kProcessCount
                                     ? code_bit(static_cast<SrlProcess>(state))
                                     : CodeMask{0});
        }
        units[static_cast<std::size_t>(i)] = std::move(unit);
    }
    return units;
}

namespace {

bool matchers_overlap(const ActionMatcher& a, const ActionMatcher& b) {
    if (a.main_action != b.main_action) return false;
    return a.sub_action == kWildcard || b.sub_action == kWildcard ||
           a.sub_action == b.sub_action;
}

}  // namespace

bool is_overlap_prefix_free(const PatternLibrary& library) {
    const auto& patterns = library.patterns();
    for (const Pattern& a : patterns) {
        for (const Pattern& b : patterns) {
            if (&a == &b || a.sequence.size() > b.sequence.size()) continue;
            if (a.sequence.size() == b.sequence.size() && a.process == b.process) continue;
            bool all_overlap = true;
            for (std::size_t p = 0; p < a.sequence.size(); ++p) {
                if (!matchers_overlap(a.sequence[p], b.sequence[p])) {
                    all_overlap = false;
                    break;
                }
            }
            if (all_overlap) return false;
        }
    }
    return true;
}

namespace {

struct InverseRule {
    std::string event_kind;
    std::string target;
};

// (main, sub) -> canonical event that maps back to exactly that action.
std::map<std::pair<MainAction, std::string>, InverseRule> build_inverse(
    const ActionConfig& config) {
    std::map<std::pair<MainAction, std::string>, InverseRule> inverse;
    for (const ActionRule& rule : config.rules()) {
        if (rule.match_event_kind == kWildcard) continue;
        TraceEvent probe;
        probe.user_id = "probe";
        probe.server_id = "probe";
        probe.event_kind = rule.match_event_kind;
        probe.target = rule.match_target_prefix == kWildcard ? "" : rule.match_target_prefix;
        const int hit = config.match(probe);
        if (hit < 0) continue;
        const ActionRule& winner = config.rules()[static_cast<std::size_t>(hit)];
        if (winner.main_action != rule.main_action || winner.sub_action != rule.sub_action) {
            continue;  // shadowed by a higher-priority rule
        }
        inverse.try_emplace({rule.main_action, rule.sub_action},
                            InverseRule{probe.event_kind, probe.target});
    }
    return inverse;
}

}  // namespace

GeneratedTrace generate_raw_trace(const SynthProfile& profile, const PatternLibrary& library,
                                  const ActionConfig& config, std::uint64_t seed) {
    validate_profile(profile);
    if (!profile.allow_ambiguous && !is_overlap_prefix_free(library)) {
        throw Error(
            "generate_raw_trace: pattern library is not overlap-prefix-free, so planted "
            "sequences may not re-parse exactly; set allow_ambiguous to override");
    }

    const auto inverse = build_inverse(config);
    auto inverse_of = [&](MainAction main, const std::string& sub) -> const InverseRule& {
        const auto it = inverse.find({main, sub});
        if (it == inverse.end()) {
            throw Error("generate_raw_trace: no invertible action rule emits (" +
                        std::string(to_string(main)) + ", " + sub + ")");
        }
        return it->second;
    };

    // subs a wildcard matcher may expand to: configured AND invertible
    std::map<MainAction, std::vector<std::string>> invertible_subs;
    for (const auto& [main, subs] : config.sub_actions()) {
        for (const auto& sub : subs) {
            if (inverse.count({main, sub})) invertible_subs[main].push_back(sub);
        }
    }

    // patterns per process, pruned to those the inverse map can render
    std::array<std::vector<const Pattern*>, kProcessCount> by_process;
    for (const Pattern& p : library.patterns()) {
        bool renderable = true;
        for (const ActionMatcher& m : p.sequence) {
            if (m.sub_action == kWildcard) {
                const auto it = invertible_subs.find(m.main_action);
                renderable = it != invertible_subs.end() && !it->second.empty();
            } else {
                renderable = inverse.count({m.main_action, m.sub_action}) > 0;
            }
            if (!renderable) break;
        }
        if (renderable) by_process[static_cast<std::size_t>(p.process)].push_back(&p);
    }
    bool needs_unlabelled = profile.noise_fraction > 0.0;
    for (const auto& group : profile.groups) {
        if (group.has_unlabelled_state()) needs_unlabelled = true;
        for (int s = 0; s < kProcessCount; ++s) {
            bool reachable = group.initial_distribution[static_cast<std::size_t>(s)] > 0.0;
            for (const auto& row : group.transition) {
                reachable = reachable || row[static_cast<std::size_t>(s)] > 0.0;
            }
            if (reachable && by_process[static_cast<std::size_t>(s)].empty()) {
                throw Error("generate_raw_trace: no renderable pattern for process " +
                            std::string(to_string(static_cast<SrlProcess>(s))) +
                            " reachable in group \"" + group.name + "\"");
            }
        }
    }
    if (needs_unlabelled && profile.noise_actions.empty()) {
        throw Error("generate_raw_trace: noise requested but profile has no noise_actions");
    }
    if (profile.unmapped_fraction > 0.0 && profile.unmapped_event_kinds.empty()) {
        throw Error("generate_raw_trace: unmapped_fraction set but no unmapped_event_kinds");
    }

    // noise actions must stay unlabellable: no pattern matcher may cover them
    for (const auto& [main, sub] : profile.noise_actions) {
        for (const Pattern& p : library.patterns()) {
            for (const ActionMatcher& m : p.sequence) {
                if (m.main_action == main && (m.sub_action == kWildcard || m.sub_action == sub)) {
                    throw Error("generate_raw_trace: noise action (" +
                                std::string(to_string(main)) + ", " + sub +
                                ") is matchable by pattern \"" + p.id + "\"");
                }
            }
        }
        inverse_of(main, sub);  // must be renderable too
    }
    for (const auto& kind : profile.unmapped_event_kinds) {
        TraceEvent probe;
        probe.user_id = "probe";
        probe.server_id = "probe";
        probe.event_kind = kind;
        if (config.match(probe) >= 0) {
            throw Error("generate_raw_trace: unmapped event kind \"" + kind +
                        "\" matches an action rule");
        }
    }

    std::vector<std::pair<const GroupProfile*, int>> slots;
    for (const auto& group : profile.groups) {
        for (int u = 0; u < group.n_units; ++u) slots.emplace_back(&group, u);
    }

    struct UnitOutput {
        UnitId unit;
        std::string group;
        SessionMetadata metadata;
        std::vector<TraceEvent> events;
        std::vector<std::optional<SrlProcess>> planted;
        std::size_t planted_actions = 0;
        std::size_t noise_actions = 0;
        std::size_t unmapped_events = 0;
    };
    std::vector<UnitOutput> outputs(slots.size());

    const std::ptrdiff_t n_units = static_cast<std::ptrdiff_t>(slots.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ui = 0; ui < n_units; ++ui) {
        const auto& [group, in_group] = slots[static_cast<std::size_t>(ui)];
        auto stream = rng::make_stream(seed, static_cast<std::uint64_t>(ui));

        UnitOutput out;
        out.unit = {unit_user_id(profile, static_cast<int>(ui)), profile.server_id};
        out.group = group->name;
        out.metadata = sample_metadata(*group, in_group, stream);

        const int span = group->lines_per_unit.second - group->lines_per_unit.first + 1;
        const int target_actions =
            group->lines_per_unit.first +
            static_cast<int>(rng::uniform_index(stream, static_cast<std::size_t>(span)));

        // instances of (main, sub, process) runs; noise slots sit between them
        struct PlantedAction {
            MainAction main;
            std::string sub;
            std::optional<SrlProcess> process;
        };
        std::vector<std::vector<PlantedAction>> instances;
        int planted_count = 0;

        std::vector<double> initial = group->initial_distribution;
        if (group->has_unlabelled_state()) initial.push_back(0.0);
        int state = sample_categorical(stream, initial);
        while (planted_count < target_actions) {
            std::vector<PlantedAction> instance;
            if (state < kProcessCount) {
                const auto process = static_cast<SrlProcess>(state);
                const auto& candidates = by_process[static_cast<std::size_t>(state)];
                const Pattern* pattern = candidates[rng::uniform_index(stream, candidates.size())];
                for (const ActionMatcher& m : pattern->sequence) {
                    std::string sub = m.sub_action;
                    if (sub == kWildcard) {
                        const auto& subs = invertible_subs.at(m.main_action);
                        sub = subs[rng::uniform_index(stream, subs.size())];
                    }
                    instance.push_back(PlantedAction{m.main_action, sub, process});
                }
            } else {
                const auto& [main, sub] =
                    profile.noise_actions[rng::uniform_index(stream, profile.noise_actions.size())];
                instance.push_back(PlantedAction{main, sub, std::nullopt});
            }
            planted_count += static_cast<int>(instance.size());
            instances.push_back(std::move(instance));
            state = sample_categorical(stream, group->transition[static_cast<std::size_t>(state)]);
        }

        // boundary noise: round(f / (1 - f) * planted) actions at random slots
        if (profile.noise_fraction > 0.0) {
            const auto n_noise = static_cast<int>(std::llround(
                profile.noise_fraction / (1.0 - profile.noise_fraction) * planted_count));
            for (int i = 0; i < n_noise; ++i) {
                const std::size_t slot = rng::uniform_index(stream, instances.size() + 1);
                const auto& [main, sub] =
                    profile.noise_actions[rng::uniform_index(stream, profile.noise_actions.size())];
                std::vector<PlantedAction> instance{PlantedAction{main, sub, std::nullopt}};
                instances.insert(instances.begin() + static_cast<std::ptrdiff_t>(slot),
                                 std::move(instance));
                ++out.noise_actions;
            }
        }

        // render actions to events
        std::vector<TraceEvent> events;
        for (const auto& instance : instances) {
            for (const PlantedAction& action : instance) {
                const InverseRule& inv = inverse_of(action.main, action.sub);
                TraceEvent e;
                e.user_id = out.unit.user_id;
                e.server_id = out.unit.server_id;
                e.event_kind = inv.event_kind;
                e.target = inv.target;
                events.push_back(std::move(e));
                out.planted.push_back(action.process);
                if (action.process) ++out.planted_actions;
            }
        }

        // weave in unmapped platform noise (mouse moves etc.)
        if (profile.unmapped_fraction > 0.0) {
            const auto n_extra = static_cast<int>(std::llround(
                profile.unmapped_fraction / (1.0 - profile.unmapped_fraction) *
                static_cast<double>(events.size())));
            for (int i = 0; i < n_extra; ++i) {
                const std::size_t slot = rng::uniform_index(stream, events.size() + 1);
                TraceEvent e;
                e.user_id = out.unit.user_id;
                e.server_id = out.unit.server_id;
                e.event_kind = profile.unmapped_event_kinds[rng::uniform_index(
                    stream, profile.unmapped_event_kinds.size())];
                events.insert(events.begin() + static_cast<std::ptrdiff_t>(slot), std::move(e));
                ++out.unmapped_events;
            }
        }

        // session-relative timestamps, fixed 1 s cadence
        for (std::size_t i = 0; i < events.size(); ++i) {
            events[i].timestamp_ms = static_cast<std::int64_t>(i) * 1000;
        }
        out.events = std::move(events);
        outputs[static_cast<std::size_t>(ui)] = std::move(out);
    }

    GeneratedTrace trace;
    for (auto& out : outputs) {
        trace.metadata.emplace(out.unit, out.metadata);
        trace.group_of.emplace(out.unit, out.group);
        trace.planted.emplace(out.unit, std::move(out.planted));
        trace.planted_actions += out.planted_actions;
        trace.noise_action_count += out.noise_actions;
        trace.unmapped_event_count += out.unmapped_events;
        trace.events.insert(trace.events.end(), std::make_move_iterator(out.events.begin()),
                            std::make_move_iterator(out.events.end()));
    }
    return trace;
}

}  // namespace tracena
