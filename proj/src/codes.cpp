#include "tracena/codes.hpp"

#include "tracena/error.hpp"

namespace tracena {

namespace {

constexpr std::array<std::string_view, kMainActionCount> kMainActionNames = {
    "ANNOTATION", "ESSAY", "INSTRUCTION", "NAVIGATION", "PLANNER", "READING", "TIMER",
};

constexpr std::array<std::string_view, kProcessCount> kProcessNames = {
    "Orientation",  "Planning",  "Monitoring", "Evaluation",
    "FirstReading", "ReReading", "ElaborationOrganisation",
};

}  // namespace

std::string_view to_string(MainAction a) {
    return kMainActionNames[static_cast<std::size_t>(a)];
}

std::string_view to_string(SrlProcess p) {
    return kProcessNames[static_cast<std::size_t>(p)];
}

std::optional<MainAction> parse_main_action(std::string_view token) {
    for (int i = 0; i < kMainActionCount; ++i) {
        if (kMainActionNames[i] == token) return static_cast<MainAction>(i);
    }
    return std::nullopt;
}

std::optional<SrlProcess> parse_srl_process(std::string_view token) {
    for (int i = 0; i < kProcessCount; ++i) {
        if (kProcessNames[i] == token) return static_cast<SrlProcess>(i);
    }
    return std::nullopt;
}

MainAction require_main_action(std::string_view token) {
    if (auto a = parse_main_action(token)) return *a;
    throw ParseError("unknown main action \"" + std::string(token) + "\"");
}

SrlProcess require_srl_process(std::string_view token) {
    if (auto p = parse_srl_process(token)) return *p;
    throw ParseError("unknown SRL process \"" + std::string(token) + "\"");
}

std::string pair_name(int index) {
    const auto [i, j] = pair_codes(index);
    std::string name(to_string(static_cast<SrlProcess>(i)));
    name += "--";
    name += to_string(static_cast<SrlProcess>(j));
    return name;
}

}  // namespace tracena
