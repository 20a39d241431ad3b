#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tracena/trace_model.hpp"

// Translates raw trace events into the canonical (main action, sub-action)
// vocabulary via a configurable rule table. Events no rule targets (UI noise
// such as mouse movement) are dropped and counted, never errors.

namespace tracena {

inline constexpr std::string_view kWildcard = "*";

struct ActionRule {
    std::string match_event_kind;     // exact kind or "*"
    std::string match_target_prefix;  // prefix or "*"
    MainAction main_action = MainAction::Annotation;
    std::string sub_action;
    int priority = 0;

    bool matches(const TraceEvent& e) const {
        if (match_event_kind != kWildcard && match_event_kind != e.event_kind) return false;
        if (match_target_prefix == kWildcard) return true;
        return e.target.compare(0, match_target_prefix.size(), match_target_prefix) == 0;
    }
};

struct Action {
    MainAction main_action = MainAction::Annotation;
    std::string sub_action;
    std::int64_t timestamp_ms = 0;
    // [start, end) indices into the session's event list
    std::pair<std::size_t, std::size_t> source_span{0, 0};

    bool operator==(const Action&) const = default;
};

class ActionConfig {
public:
    // Rules come out sorted by descending priority, then file order.
    static ActionConfig load(const std::filesystem::path& path);
    static ActionConfig from_rules(
        std::vector<ActionRule> rules,
        std::map<MainAction, std::vector<std::string>> sub_actions);

    const std::vector<ActionRule>& rules() const { return rules_; }
    const std::map<MainAction, std::vector<std::string>>& sub_actions() const {
        return sub_actions_;
    }

    // First matching rule in priority order, or -1.
    int match(const TraceEvent& e) const;

private:
    void validate_and_sort();
    void build_index();

    std::vector<ActionRule> rules_;
    std::map<MainAction, std::vector<std::string>> sub_actions_;
    // event_kind -> rule indices (concrete + wildcard-kind, in rule order)
    std::map<std::string, std::vector<int>> by_kind_;
    std::vector<int> wildcard_kind_rules_;
};

struct MapResult {
    std::vector<Action> actions;
    std::size_t total_events = 0;
    std::size_t mapped_events = 0;
    std::size_t unmapped_events = 0;
    std::map<std::string, std::size_t> unmapped_by_kind;
};

// Scans a session's events in order, emitting one Action per matched event.
// With coalesce_gap_ms > 0, consecutive events that map to the identical
// (main, sub) and lie within the gap merge into one Action whose source_span
// covers them; 0 disables merging entirely. An intervening unmatched or
// differently-mapped event always breaks a run.
MapResult map_events(const Session& session, const ActionConfig& config,
                     std::int64_t coalesce_gap_ms = 0);

struct SessionCoverage {
    UnitId unit;
    std::size_t total = 0;
    std::size_t mapped = 0;
    std::map<std::string, std::size_t> unmapped_by_kind;
};

struct CoverageReport {
    std::vector<SessionCoverage> sessions;
    std::size_t total = 0;
    std::size_t mapped = 0;
    std::map<std::string, std::size_t> unmapped_by_kind;

    double mapped_fraction() const {
        return total == 0 ? 1.0 : static_cast<double>(mapped) / static_cast<double>(total);
    }
};

CoverageReport coverage_report(std::span<const Session> sessions, const ActionConfig& config);

}  // namespace tracena
