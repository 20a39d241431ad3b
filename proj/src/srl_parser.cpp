#include "tracena/srl_parser.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tracena/error.hpp"

namespace tracena {

namespace {
using ordered_json = nlohmann::ordered_json;
}

PatternLibrary PatternLibrary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open \"" + path.string() + "\"");
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const std::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }

    std::vector<Pattern> patterns;
    try {
        for (const auto& item : doc.at("patterns")) {
            Pattern p;
            p.id = item.at("id").get<std::string>();
            p.process = require_srl_process(item.at("process").get<std::string>());
            for (const auto& step : item.at("sequence")) {
                ActionMatcher m;
                m.main_action = require_main_action(step.at("main").get<std::string>());
                m.sub_action = step.at("sub").get<std::string>();
                p.sequence.push_back(std::move(m));
            }
            patterns.push_back(std::move(p));
        }
    } catch (const ordered_json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return from_patterns(std::move(patterns));
}

PatternLibrary PatternLibrary::from_patterns(std::vector<Pattern> patterns) {
    PatternLibrary library;
    library.patterns_ = std::move(patterns);
    for (std::size_t i = 0; i < library.patterns_.size(); ++i) {
        library.patterns_[i].source_rank = static_cast<int>(i);
    }
    library.validate_and_sort();
    return library;
}

void PatternLibrary::validate_and_sort() {
    std::set<std::string> ids;
    for (const Pattern& p : patterns_) {
        if (p.id.empty()) throw ParseError("pattern with empty id");
        if (!ids.insert(p.id).second) throw ParseError("duplicate pattern id \"" + p.id + "\"");
        if (p.sequence.empty()) throw ParseError("pattern \"" + p.id + "\" has an empty sequence");
        for (const ActionMatcher& m : p.sequence) {
            if (m.sub_action.empty()) {
                throw ParseError("pattern \"" + p.id + "\" has an empty sub action matcher");
            }
        }
    }
    std::sort(patterns_.begin(), patterns_.end(), [](const Pattern& a, const Pattern& b) {
        if (a.sequence.size() != b.sequence.size()) {
            return a.sequence.size() > b.sequence.size();
        }
        return a.source_rank < b.source_rank;
    });
}

namespace {

bool matches_at(const Pattern& pattern, std::span<const Action> actions, std::size_t cursor) {
    if (cursor + pattern.sequence.size() > actions.size()) return false;
    for (std::size_t k = 0; k < pattern.sequence.size(); ++k) {
        if (!pattern.sequence[k].matches(actions[cursor + k])) return false;
    }
    return true;
}

}  // namespace

std::vector<LabelledAction> label_actions(std::span<const Action> actions,
                                          const PatternLibrary& library) {
    if (library.empty()) throw Error("label_actions: pattern library is empty");

    std::vector<LabelledAction> out;
    out.reserve(actions.size());
    for (const Action& a : actions) out.push_back(LabelledAction{a, {}, {}, {}});

    std::size_t cursor = 0;
    while (cursor < actions.size()) {
        const Pattern* matched = nullptr;
        for (const Pattern& pattern : library.patterns()) {
            if (matches_at(pattern, actions, cursor)) {
                matched = &pattern;
                break;
            }
        }
        if (!matched) {
            ++cursor;
            continue;
        }
        for (std::size_t k = 0; k < matched->sequence.size(); ++k) {
            LabelledAction& la = out[cursor + k];
            la.process = matched->process;
            la.pattern_id = matched->id;
            la.match_position = static_cast<int>(k);
        }
        cursor += matched->sequence.size();
    }
    return out;
}

LabelCoverage label_coverage(std::span<const LabelledAction> labelled) {
    LabelCoverage coverage;
    coverage.total = labelled.size();
    for (const LabelledAction& la : labelled) {
        if (la.process) {
            ++coverage.per_process[*la.process];
        } else {
            ++coverage.unlabelled;
        }
    }
    return coverage;
}

}  // namespace tracena
