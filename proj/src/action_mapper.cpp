#include "tracena/action_mapper.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tracena/error.hpp"

namespace tracena {

namespace {
using ordered_json = nlohmann::ordered_json;
}

ActionConfig ActionConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open \"" + path.string() + "\"");
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const std::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }

    ActionConfig config;
    try {
        for (const auto& [main_token, subs] : doc.at("sub_actions").items()) {
            const MainAction main = require_main_action(main_token);
            auto& list = config.sub_actions_[main];
            for (const auto& sub : subs) list.push_back(sub.get<std::string>());
        }
        for (const auto& item : doc.at("rules")) {
            ActionRule rule;
            rule.match_event_kind = item.at("event_kind").get<std::string>();
            rule.match_target_prefix = item.value("target_prefix", std::string(kWildcard));
            rule.main_action = require_main_action(item.at("main").get<std::string>());
            rule.sub_action = item.at("sub").get<std::string>();
            rule.priority = item.value("priority", 0);
            config.rules_.push_back(std::move(rule));
        }
    } catch (const ordered_json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    config.validate_and_sort();
    config.build_index();
    return config;
}

ActionConfig ActionConfig::from_rules(
    std::vector<ActionRule> rules, std::map<MainAction, std::vector<std::string>> sub_actions) {
    ActionConfig config;
    config.rules_ = std::move(rules);
    config.sub_actions_ = std::move(sub_actions);
    config.validate_and_sort();
    config.build_index();
    return config;
}

void ActionConfig::validate_and_sort() {
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& rule : rules_) {
        if (rule.priority < 0) {
            throw ParseError("rule for kind \"" + rule.match_event_kind +
                             "\": priority must be >= 0");
        }
        if (rule.sub_action.empty()) {
            throw ParseError("rule for kind \"" + rule.match_event_kind +
                             "\": sub_action is empty");
        }
        const auto subs = sub_actions_.find(rule.main_action);
        if (subs == sub_actions_.end() ||
            std::find(subs->second.begin(), subs->second.end(), rule.sub_action) ==
                subs->second.end()) {
            throw ParseError("unknown sub action \"" + rule.sub_action + "\" for main action " +
                             std::string(to_string(rule.main_action)));
        }
        if (!keys.emplace(rule.match_event_kind, rule.match_target_prefix).second) {
            throw ParseError("duplicate rule for (event_kind=" + rule.match_event_kind +
                             ", target_prefix=" + rule.match_target_prefix + ")");
        }
    }
    std::stable_sort(rules_.begin(), rules_.end(),
                     [](const ActionRule& a, const ActionRule& b) {
                         return a.priority > b.priority;
                     });
}

void ActionConfig::build_index() {
    for (int i = 0; i < static_cast<int>(rules_.size()); ++i) {
        if (rules_[i].match_event_kind == kWildcard) {
            wildcard_kind_rules_.push_back(i);
        } else {
            by_kind_[rules_[i].match_event_kind].push_back(i);
        }
    }
    // merge wildcard-kind rules into every concrete kind bucket, keeping
    // global rule order so first-match semantics survive the index
    for (auto& [kind, bucket] : by_kind_) {
        std::vector<int> merged;
        merged.reserve(bucket.size() + wildcard_kind_rules_.size());
        std::merge(bucket.begin(), bucket.end(), wildcard_kind_rules_.begin(),
                   wildcard_kind_rules_.end(), std::back_inserter(merged));
        bucket = std::move(merged);
    }
}

int ActionConfig::match(const TraceEvent& e) const {
    const auto bucket = by_kind_.find(e.event_kind);
    const std::vector<int>& candidates =
        bucket != by_kind_.end() ? bucket->second : wildcard_kind_rules_;
    for (const int idx : candidates) {
        if (rules_[idx].matches(e)) return idx;
    }
    return -1;
}

MapResult map_events(const Session& session, const ActionConfig& config,
                     std::int64_t coalesce_gap_ms) {
    if (config.rules().empty()) throw Error("map_events: rule list is empty");

    MapResult result;
    result.total_events = session.events.size();

    std::int64_t last_event_ts = 0;
    for (std::size_t i = 0; i < session.events.size(); ++i) {
        const TraceEvent& event = session.events[i];
        const int rule_idx = config.match(event);
        if (rule_idx < 0) {
            ++result.unmapped_events;
            ++result.unmapped_by_kind[event.event_kind];
            last_event_ts = event.timestamp_ms;  // any gap computation restarts anyway
            continue;
        }
        ++result.mapped_events;
        const ActionRule& rule = config.rules()[rule_idx];

        Action* tail = result.actions.empty() ? nullptr : &result.actions.back();
        const bool mergeable = coalesce_gap_ms > 0 && tail != nullptr &&
                               tail->source_span.second == i &&
                               tail->main_action == rule.main_action &&
                               tail->sub_action == rule.sub_action &&
                               event.timestamp_ms - last_event_ts <= coalesce_gap_ms;
        if (mergeable) {
            tail->source_span.second = i + 1;
        } else {
            result.actions.push_back(Action{rule.main_action, rule.sub_action,
                                            event.timestamp_ms, {i, i + 1}});
        }
        last_event_ts = event.timestamp_ms;
    }
    return result;
}

CoverageReport coverage_report(std::span<const Session> sessions, const ActionConfig& config) {
    CoverageReport report;
    for (const Session& session : sessions) {
        SessionCoverage sc;
        sc.unit = session.unit_id();
        sc.total = session.events.size();
        for (const TraceEvent& event : session.events) {
            if (config.match(event) >= 0) {
                ++sc.mapped;
            } else {
                ++sc.unmapped_by_kind[event.event_kind];
            }
        }
        report.total += sc.total;
        report.mapped += sc.mapped;
        for (const auto& [kind, n] : sc.unmapped_by_kind) report.unmapped_by_kind[kind] += n;
        report.sessions.push_back(std::move(sc));
    }
    return report;
}

}  // namespace tracena
