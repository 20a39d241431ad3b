// Kernel benchmarks: OpenMP-parallel paths against their serial counterparts
// and the brute-force references kept for testing.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "reference.hpp"
#include "tracena/ena_engine.hpp"
#include "tracena/pipeline.hpp"
#include "tracena/rng.hpp"
#include "tracena/srl_parser.hpp"
#include "tracena/stats.hpp"
#include "tracena/synthgen.hpp"

using namespace tracena;

namespace {

std::vector<CodedUnit> make_units(int n_units, int lines) {
    std::mt19937_64 gen(7);
    std::vector<CodedUnit> units;
    for (int u = 0; u < n_units; ++u) {
        CodedUnit unit{{"u" + std::to_string(u), "s1"}, {}};
        unit.lines.reserve(static_cast<std::size_t>(lines));
        for (int l = 0; l < lines; ++l) {
            unit.lines.push_back(CodeMask{1} << (gen() % kProcessCount));
        }
        units.push_back(std::move(unit));
    }
    return units;
}

const std::vector<CodedUnit>& units_fixture() {
    static const std::vector<CodedUnit> units = make_units(125, 5000);
    return units;
}

void BM_accumulate_reference(benchmark::State& state) {
    const auto& units = units_fixture();
    for (auto _ : state) {
        std::int64_t sink = 0;
        for (const auto& unit : units) {
            sink += reference::accumulate_brute_force(unit.lines, 50)[0];
        }
        benchmark::DoNotOptimize(sink);
    }
}
BENCHMARK(BM_accumulate_reference)->Unit(benchmark::kMillisecond);

void BM_accumulate_serial(benchmark::State& state) {
    const auto& units = units_fixture();
    for (auto _ : state) {
        auto out = accumulate_all_serial(units, 50);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_accumulate_serial)->Unit(benchmark::kMillisecond);

void BM_accumulate_parallel(benchmark::State& state) {
    const auto& units = units_fixture();
    for (auto _ : state) {
        auto out = accumulate_all(units, 50);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_accumulate_parallel)->Unit(benchmark::kMillisecond);

struct LabelFixture {
    std::vector<SessionActions> sessions;
    PatternLibrary library = PatternLibrary::from_patterns({});
};

const LabelFixture& label_fixture() {
    static const LabelFixture fixture = [] {
        LabelFixture f;
        f.library = PatternLibrary::load(std::filesystem::path(TRACENA_DATA_DIR) /
                                         "patterns_default.json");
        std::mt19937_64 gen(11);
        const std::vector<std::pair<MainAction, std::string>> vocab = {
            {MainAction::Instruction, "Read_Instruction"}, {MainAction::Navigation, "Open_Navigation"},
            {MainAction::Reading, "Read_Content"},         {MainAction::Reading, "Revisit_Content"},
            {MainAction::Essay, "Write_Essay"},            {MainAction::Timer, "Check_Timer"},
            {MainAction::Planner, "Open_Planner"},         {MainAction::Planner, "Create_Plan"},
        };
        for (int s = 0; s < 64; ++s) {
            SessionActions session;
            session.unit = {"u" + std::to_string(s), "s1"};
            for (int i = 0; i < 5000; ++i) {
                const auto& [main, sub] = vocab[gen() % vocab.size()];
                session.actions.push_back(
                    Action{main, sub, static_cast<std::int64_t>(i), {static_cast<std::size_t>(i),
                                                                     static_cast<std::size_t>(i + 1)}});
            }
            f.sessions.push_back(std::move(session));
        }
        return f;
    }();
    return fixture;
}

void BM_label_serial(benchmark::State& state) {
    const auto& fixture = label_fixture();
    for (auto _ : state) {
        std::vector<SessionLabels> out(fixture.sessions.size());
        for (std::size_t i = 0; i < fixture.sessions.size(); ++i) {
            out[i] = SessionLabels{fixture.sessions[i].unit,
                                   label_actions(fixture.sessions[i].actions, fixture.library)};
        }
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_label_serial)->Unit(benchmark::kMillisecond);

void BM_label_parallel(benchmark::State& state) {
    const auto& fixture = label_fixture();
    for (auto _ : state) {
        auto out = label_sessions(fixture.sessions, fixture.library);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_label_parallel)->Unit(benchmark::kMillisecond);

DesignMatrix bootstrap_fixture() {
    auto stream = rng::make_stream(13, 0);
    const int n = 200;
    DesignMatrix design;
    design.columns.resize(n, 3);
    design.response.resize(n);
    design.column_names = {"intercept", "x1", "x2"};
    for (int r = 0; r < n; ++r) {
        const double x1 = rng::normal(stream);
        const double x2 = rng::normal(stream);
        design.columns(r, 0) = 1.0;
        design.columns(r, 1) = x1;
        design.columns(r, 2) = x2;
        design.response(r) = 0.5 * x1 - 0.25 * x2 + rng::normal(stream);
    }
    return design;
}

void BM_bootstrap_serial(benchmark::State& state) {
    const DesignMatrix design = bootstrap_fixture();
    BootstrapOptions options;
    options.replicates = 1000;
    options.parallel = false;
    for (auto _ : state) {
        auto out = bootstrap_ci(design, options);
        benchmark::DoNotOptimize(out.ci.data());
    }
}
BENCHMARK(BM_bootstrap_serial)->Unit(benchmark::kMillisecond);

void BM_bootstrap_parallel(benchmark::State& state) {
    const DesignMatrix design = bootstrap_fixture();
    BootstrapOptions options;
    options.replicates = 1000;
    options.parallel = true;
    for (auto _ : state) {
        auto out = bootstrap_ci(design, options);
        benchmark::DoNotOptimize(out.ci.data());
    }
}
BENCHMARK(BM_bootstrap_parallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
