#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tracena/action_mapper.hpp"
#include "tracena/codes.hpp"

// Labels action sequences with SRL processes by greedy longest-first pattern
// matching. Patterns are contiguous ordered templates; the library is kept
// sorted by descending sequence length, ties broken by file order.

namespace tracena {

struct ActionMatcher {
    MainAction main_action = MainAction::Annotation;
    std::string sub_action;  // concrete sub or "*" (any sub of this main action)

    bool matches(const Action& a) const {
        return a.main_action == main_action &&
               (sub_action == kWildcard || sub_action == a.sub_action);
    }

    bool operator==(const ActionMatcher&) const = default;
};

struct Pattern {
    std::string id;
    SrlProcess process = SrlProcess::Orientation;
    std::vector<ActionMatcher> sequence;  // length >= 1
    int source_rank = 0;                  // file order
};

class PatternLibrary {
public:
    static PatternLibrary load(const std::filesystem::path& path);
    // Takes patterns in file order; assigns source_rank, validates, sorts.
    static PatternLibrary from_patterns(std::vector<Pattern> patterns);

    const std::vector<Pattern>& patterns() const { return patterns_; }
    std::size_t size() const { return patterns_.size(); }
    bool empty() const { return patterns_.empty(); }

private:
    void validate_and_sort();

    std::vector<Pattern> patterns_;  // sorted (descending length, ascending rank)
};

struct LabelledAction {
    Action action;
    std::optional<SrlProcess> process;
    std::optional<std::string> pattern_id;
    std::optional<int> match_position;  // 0-based offset within the matched sequence
};

// Greedy scan: at each cursor try patterns in library order; a match labels
// all covered actions and advances the cursor by the matched length,
// otherwise the action stays unlabelled and the cursor advances by one.
std::vector<LabelledAction> label_actions(std::span<const Action> actions,
                                          const PatternLibrary& library);

struct LabelCoverage {
    std::map<SrlProcess, std::size_t> per_process;
    std::size_t total = 0;
    std::size_t unlabelled = 0;

    double unlabelled_fraction() const {
        return total == 0 ? 0.0
                          : static_cast<double>(unlabelled) / static_cast<double>(total);
    }
};

LabelCoverage label_coverage(std::span<const LabelledAction> labelled);

}  // namespace tracena
