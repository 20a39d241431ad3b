#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "tracena/action_mapper.hpp"
#include "tracena/ena_engine.hpp"
#include "tracena/srl_parser.hpp"
#include "tracena/synthgen.hpp"

// Shared test helpers: tiny builders and a self-cleaning temp directory.

namespace tracena::testing {

#ifndef TRACENA_DATA_DIR
#error "TRACENA_DATA_DIR must be defined by the build"
#endif

inline std::filesystem::path data_dir() { return std::filesystem::path(TRACENA_DATA_DIR); }

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        static std::atomic<unsigned> counter{0};
        path = base / ("tracena_test_" + std::to_string(::getpid()) + "_" +
                       std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path file(const std::string& name) const { return path / name; }
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Action make_action(MainAction main, std::string sub, std::int64_t ts = 0,
                          std::size_t index = 0) {
    return Action{main, std::move(sub), ts, {index, index + 1}};
}

inline Pattern make_pattern(std::string id, SrlProcess process,
                            std::vector<std::pair<MainAction, std::string>> steps) {
    Pattern p;
    p.id = std::move(id);
    p.process = process;
    for (auto& [main, sub] : steps) p.sequence.push_back(ActionMatcher{main, std::move(sub)});
    return p;
}

inline CodedUnit make_unit(std::string user, std::vector<CodeMask> lines) {
    return CodedUnit{{std::move(user), "s1"}, std::move(lines)};
}

// A minimal GroupProfile; callers adjust fields as needed.
inline GroupProfile make_group(std::string name, int n_units,
                               std::vector<double> stationary_row, int lines_lo, int lines_hi,
                               double essay_mean, double essay_sd) {
    GroupProfile g;
    g.name = std::move(name);
    g.n_units = n_units;
    g.education_level = EducationLevel::SE;
    g.school_ids = {"school_0", "school_1"};
    g.lines_per_unit = {lines_lo, lines_hi};
    g.initial_distribution = stationary_row;
    g.transition.assign(stationary_row.size(), stationary_row);
    g.essay_score = {essay_mean, essay_sd};
    g.pretest_score = {8.0, 2.0};
    g.task_length_minutes = {38.0, 6.0};
    return g;
}

}  // namespace tracena::testing
