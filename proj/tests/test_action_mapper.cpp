#include <doctest.h>

#include "fixtures.hpp"
#include "tracena/action_mapper.hpp"
#include "tracena/error.hpp"
#include "tracena/synthgen.hpp"

using namespace tracena;
using namespace tracena::testing;

namespace {

TraceEvent event(std::int64_t ts, const std::string& kind, const std::string& target = "") {
    TraceEvent e;
    e.timestamp_ms = ts;
    e.user_id = "u1";
    e.server_id = "s1";
    e.event_kind = kind;
    e.target = target;
    return e;
}

Session session_of(std::vector<TraceEvent> events) {
    SessionMetadata meta;
    meta.task_length_minutes = 10.0;
    return Session{"u1", "s1", std::move(events), meta};
}

ActionConfig tiny_config() {
    std::map<MainAction, std::vector<std::string>> subs = {
        {MainAction::Annotation, {"Create_Note"}},
        {MainAction::Reading, {"Read_Content", "Scroll_Content"}},
        {MainAction::Essay, {"Write_Essay"}},
    };
    std::vector<ActionRule> rules = {
        {"note_create", "*", MainAction::Annotation, "Create_Note", 0},
        {"content_read", "*", MainAction::Reading, "Read_Content", 0},
        {"essay_keystroke", "*", MainAction::Essay, "Write_Essay", 0},
    };
    return ActionConfig::from_rules(std::move(rules), std::move(subs));
}

}  // namespace

TEST_SUITE_BEGIN("action-mapper");

TEST_CASE("config loads rules sorted by descending priority, then file order") {
    TempDir dir;
    write_file(dir.file("c.json"), R"({
      "sub_actions": {"READING": ["Read_Content", "Scroll_Content"], "ESSAY": ["Write_Essay"]},
      "rules": [
        {"event_kind": "a", "main": "READING", "sub": "Read_Content", "priority": 0},
        {"event_kind": "b", "main": "READING", "sub": "Scroll_Content", "priority": 2},
        {"event_kind": "c", "main": "ESSAY", "sub": "Write_Essay", "priority": 1},
        {"event_kind": "d", "main": "READING", "sub": "Read_Content", "priority": 2},
        {"event_kind": "e", "main": "READING", "sub": "Read_Content", "priority": 0},
        {"event_kind": "f", "main": "ESSAY", "sub": "Write_Essay", "priority": 0},
        {"event_kind": "g", "main": "READING", "sub": "Scroll_Content", "priority": 3}
      ]})");
    const ActionConfig config = ActionConfig::load(dir.file("c.json"));
    REQUIRE(config.rules().size() == 7);
    CHECK(config.rules()[0].match_event_kind == "g");
    CHECK(config.rules()[1].match_event_kind == "b");
    CHECK(config.rules()[2].match_event_kind == "d");  // ties keep file order
    CHECK(config.rules()[3].match_event_kind == "c");
    CHECK(config.rules()[4].match_event_kind == "a");
    CHECK(config.rules()[5].match_event_kind == "e");
    CHECK(config.rules()[6].match_event_kind == "f");
}

TEST_CASE("config rejects unknown tokens and duplicate rule keys") {
    TempDir dir;
    write_file(dir.file("bad_main.json"), R"({
      "sub_actions": {"FOO": ["X"]},
      "rules": []})");
    CHECK_THROWS_WITH_AS(ActionConfig::load(dir.file("bad_main.json")), doctest::Contains("FOO"),
                         ParseError);

    write_file(dir.file("bad_sub.json"), R"({
      "sub_actions": {"READING": ["Read_Content"]},
      "rules": [{"event_kind": "a", "main": "READING", "sub": "Skim"}]})");
    CHECK_THROWS_WITH_AS(ActionConfig::load(dir.file("bad_sub.json")), doctest::Contains("Skim"),
                         ParseError);

    write_file(dir.file("dup.json"), R"({
      "sub_actions": {"READING": ["Read_Content"]},
      "rules": [
        {"event_kind": "a", "main": "READING", "sub": "Read_Content"},
        {"event_kind": "a", "main": "READING", "sub": "Read_Content"}
      ]})");
    CHECK_THROWS_WITH_AS(ActionConfig::load(dir.file("dup.json")), doctest::Contains("duplicate"),
                         ParseError);
}

TEST_CASE("the shipped default config loads cleanly") {
    const ActionConfig config = ActionConfig::load(data_dir() / "actions_default.json");
    CHECK(config.rules().size() == 23);
    // one rule per configured sub-action
    std::size_t subs = 0;
    for (const auto& [main, list] : config.sub_actions()) subs += list.size();
    CHECK(config.rules().size() == subs);
}

TEST_CASE("a matching event emits one action") {
    const ActionConfig config = ActionConfig::load(data_dir() / "actions_default.json");
    const MapResult result = map_events(session_of({event(5, "note_create")}), config);
    REQUIRE(result.actions.size() == 1);
    CHECK(result.actions[0].main_action == MainAction::Annotation);
    CHECK(result.actions[0].sub_action == "Create_Note");
    CHECK(result.actions[0].timestamp_ms == 5);
    CHECK(result.actions[0].source_span == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(result.mapped_events == 1);
}

TEST_CASE("an empty session maps to an empty action list") {
    const MapResult result = map_events(session_of({}), tiny_config());
    CHECK(result.actions.empty());
    CHECK(result.total_events == 0);
}

TEST_CASE("unmatched events are dropped and counted, never errors") {
    const MapResult result = map_events(
        session_of({event(0, "content_read"), event(1, "mouse_move"), event(2, "mouse_move")}),
        tiny_config());
    CHECK(result.actions.size() == 1);
    CHECK(result.mapped_events == 1);
    CHECK(result.unmapped_events == 2);
    CHECK(result.unmapped_by_kind.at("mouse_move") == 2);
}

TEST_CASE("synthetic stream with a planted unmapped share: 90/100 mapped") {
    SynthProfile profile;
    profile.groups.push_back(make_group("g", 1, {1, 0, 0, 0, 0, 0, 0}, 90, 90, 10, 1));
    profile.unmapped_fraction = 0.10;
    profile.unmapped_event_kinds = {"mouse_move"};
    const PatternLibrary library = PatternLibrary::from_patterns(
        {make_pattern("p", SrlProcess::Orientation, {{MainAction::Instruction, "Read_Instruction"}})});
    const ActionConfig config = ActionConfig::load(data_dir() / "actions_default.json");
    const GeneratedTrace trace = generate_raw_trace(profile, library, config, 3);
    REQUIRE(trace.events.size() == 100);

    const MapResult result = map_events(sessionize(trace.events, trace.metadata)[0], config);
    CHECK(result.total_events == 100);
    CHECK(result.mapped_events == 90);
    CHECK(result.actions.size() == 90);
    CHECK(result.unmapped_events == 10);
}

TEST_CASE("priority decides between overlapping rules") {
    std::map<MainAction, std::vector<std::string>> subs = {
        {MainAction::Reading, {"Read_Content", "Revisit_Content"}}};
    std::vector<ActionRule> rules = {
        {"page_view", "*", MainAction::Reading, "Read_Content", 0},
        {"page_view", "revisit/", MainAction::Reading, "Revisit_Content", 5},
    };
    const ActionConfig config = ActionConfig::from_rules(std::move(rules), std::move(subs));

    const MapResult revisit =
        map_events(session_of({event(0, "page_view", "revisit/page_3")}), config);
    CHECK(revisit.actions[0].sub_action == "Revisit_Content");
    const MapResult fresh = map_events(session_of({event(0, "page_view", "page_3")}), config);
    CHECK(fresh.actions[0].sub_action == "Read_Content");
}

TEST_CASE("wildcard event kinds match by target prefix") {
    std::map<MainAction, std::vector<std::string>> subs = {
        {MainAction::Essay, {"Write_Essay"}}, {MainAction::Reading, {"Read_Content"}}};
    std::vector<ActionRule> rules = {
        {"*", "essay/", MainAction::Essay, "Write_Essay", 1},
        {"anything", "*", MainAction::Reading, "Read_Content", 0},
    };
    const ActionConfig config = ActionConfig::from_rules(std::move(rules), std::move(subs));
    const MapResult result = map_events(
        session_of({event(0, "anything", "essay/box"), event(1, "anything", "page")}), config);
    CHECK(result.actions[0].main_action == MainAction::Essay);
    CHECK(result.actions[1].main_action == MainAction::Reading);
}

TEST_CASE("coalescing merges identical consecutive actions inside the gap") {
    const ActionConfig config = tiny_config();
    const std::vector<TraceEvent> events = {
        event(0, "essay_keystroke"),   event(100, "essay_keystroke"),
        event(150, "essay_keystroke"), event(5000, "essay_keystroke"),
        event(5100, "content_read"),   event(5200, "essay_keystroke"),
    };

    SUBCASE("gap 0 disables merging") {
        const MapResult result = map_events(session_of(events), config, 0);
        CHECK(result.actions.size() == 6);
    }
    SUBCASE("gap 500 merges bursts and breaks on other actions") {
        const MapResult result = map_events(session_of(events), config, 500);
        REQUIRE(result.actions.size() == 4);
        CHECK(result.actions[0].source_span == std::pair<std::size_t, std::size_t>{0, 3});
        CHECK(result.actions[0].timestamp_ms == 0);
        CHECK(result.actions[1].source_span == std::pair<std::size_t, std::size_t>{3, 4});
        CHECK(result.actions[2].sub_action == "Read_Content");
        CHECK(result.actions[3].source_span == std::pair<std::size_t, std::size_t>{5, 6});
    }
    SUBCASE("an unmatched event in between breaks a run") {
        auto with_noise = events;
        with_noise.insert(with_noise.begin() + 1, event(50, "mouse_move"));
        const MapResult result = map_events(session_of(with_noise), config, 500);
        CHECK(result.actions.size() == 5);  // burst split at the noise event
    }
}

TEST_CASE("mapping is deterministic, order preserving and count conserving") {
    const ActionConfig config = ActionConfig::load(data_dir() / "actions_default.json");
    std::mt19937_64 gen(17);
    const std::vector<std::string> kinds = {"note_create", "content_read", "mouse_move",
                                            "essay_keystroke", "timer_check", "unknown_thing"};
    std::vector<TraceEvent> events;
    std::int64_t ts = 0;
    for (int i = 0; i < 400; ++i) {
        ts += static_cast<std::int64_t>(gen() % 100);
        events.push_back(event(ts, kinds[gen() % kinds.size()]));
    }
    const Session session = session_of(events);

    const MapResult a = map_events(session, config);
    const MapResult b = map_events(session, config);
    CHECK(a.actions == b.actions);
    CHECK(a.mapped_events + a.unmapped_events == a.total_events);

    // action timestamps are a subsequence of event timestamps
    std::size_t cursor = 0;
    for (const Action& action : a.actions) {
        while (cursor < events.size() && events[cursor].timestamp_ms != action.timestamp_ms) {
            ++cursor;
        }
        REQUIRE(cursor < events.size());
    }
}

TEST_CASE("coverage_report aggregates sessions") {
    const ActionConfig config = tiny_config();

    SUBCASE("all mapped") {
        std::vector<Session> sessions{session_of({event(0, "content_read"), event(1, "note_create")})};
        const CoverageReport report = coverage_report(sessions, config);
        CHECK(report.total == 2);
        CHECK(report.mapped == 2);
        CHECK(report.mapped_fraction() == 1.0);
        CHECK(report.unmapped_by_kind.empty());
    }
    SUBCASE("empty session list") {
        const CoverageReport report = coverage_report({}, config);
        CHECK(report.sessions.empty());
        CHECK(report.total == 0);
    }
    SUBCASE("planted unmapped kinds are listed exactly") {
        SynthProfile profile;
        profile.groups.push_back(make_group("g", 4, {1, 0, 0, 0, 0, 0, 0}, 100, 100, 10, 1));
        profile.unmapped_fraction = 0.05;
        profile.unmapped_event_kinds = {"mouse_move", "window_resize"};
        const PatternLibrary library = PatternLibrary::from_patterns({make_pattern(
            "p", SrlProcess::Orientation, {{MainAction::Instruction, "Read_Instruction"}})});
        const ActionConfig full = ActionConfig::load(data_dir() / "actions_default.json");
        const GeneratedTrace trace = generate_raw_trace(profile, library, full, 5);
        const auto sessions = sessionize(trace.events, trace.metadata);
        const CoverageReport report = coverage_report(sessions, full);
        REQUIRE(report.unmapped_by_kind.size() == 2);
        CHECK(report.unmapped_by_kind.count("mouse_move") == 1);
        CHECK(report.unmapped_by_kind.count("window_resize") == 1);
        std::size_t unmapped = 0;
        for (const auto& [kind, count] : report.unmapped_by_kind) unmapped += count;
        CHECK(unmapped == trace.unmapped_event_count);
        CHECK(report.sessions.size() == 4);
    }
}

TEST_SUITE_END();
