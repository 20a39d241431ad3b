#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracena/action_mapper.hpp"
#include "tracena/ena_engine.hpp"
#include "tracena/render.hpp"
#include "tracena/srl_parser.hpp"
#include "tracena/stats.hpp"
#include "tracena/trace_model.hpp"

// End-to-end orchestration: map -> label -> ena -> compare, with every
// artifact written to the output directory and a manifest recording seeds,
// versions and decision flags. Stage failures surface as PipelineError
// tagged with the stage name.

namespace tracena {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct PipelineConfig {
    std::filesystem::path trace;
    std::filesystem::path metadata;
    std::filesystem::path actions_config;
    std::filesystem::path pattern_library;
    std::filesystem::path out_dir;
    TraceFormat trace_format = TraceFormat::Delimited;
    int window = 50;
    ModelId model = ModelId::M1;
    std::string grouping;                        // "performance" or "level"; empty = from model
    std::optional<EducationLevel> filter_level;  // empty = from model
    int bootstrap = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 42;
    TieRule tie = TieRule::Low;
    std::int64_t coalesce_ms = 0;
    bool drop_unlabelled = false;
    std::optional<std::string> reference_school;  // required by M1

    static PipelineConfig load(const std::filesystem::path& path);

    // Resolves defaults (grouping/filter from the model) and checks that
    // referenced files exist, tagging failures with the consuming stage.
    void validate();
};

struct SessionActions {
    UnitId unit;
    std::vector<Action> actions;
};

struct SessionLabels {
    UnitId unit;
    std::vector<LabelledAction> labelled;
};

// Sessions mapped/labelled independently in parallel.
std::vector<SessionActions> map_sessions(std::span<const Session> sessions,
                                         const ActionConfig& config, std::int64_t coalesce_ms,
                                         CoverageReport* coverage = nullptr);
std::vector<SessionLabels> label_sessions(std::span<const SessionActions> sessions,
                                          const PatternLibrary& library);

// ---- artifact files ----------------------------------------------------

void write_actions_csv(const std::filesystem::path& path,
                       std::span<const SessionActions> sessions);
std::vector<SessionActions> read_actions_csv(const std::filesystem::path& path);

void write_labelled_csv(const std::filesystem::path& path,
                        std::span<const SessionLabels> sessions);
std::vector<SessionLabels> read_labelled_csv(const std::filesystem::path& path);

struct ScoreRow {
    UnitId unit;
    double mr1 = 0.0;
    double svd2 = 0.0;
    std::string group;
};

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

void write_network_json(const std::filesystem::path& path, const MeanNetwork& network);
MeanNetwork read_network_json(const std::filesystem::path& path);
void write_subtraction_json(const std::filesystem::path& path, const SubtractionNetwork& sub);
SubtractionNetwork read_subtraction_json(const std::filesystem::path& path);

void write_space_json(const std::filesystem::path& path, const EnaSpace& space,
                      const NodeFit& fit, int window);
struct SpaceFile {
    Eigen::MatrixXd basis;
    Eigen::VectorXd grand_mean;
    Eigen::VectorXd variance_explained;
    Eigen::MatrixXd node_positions;
    std::vector<DimensionFit> goodness_of_fit;
    int window = 0;
};
SpaceFile read_space_json(const std::filesystem::path& path);

void write_regression_json(const std::filesystem::path& path, const RegressionResult& result,
                           const BootstrapResult& bootstrap,
                           std::span<const InteractionTest> interactions,
                           const std::array<std::string, 2>& d_groups);
RegressionResult read_regression_json(const std::filesystem::path& path);

// ---- ena + compare stages (reusable by the CLI subcommands) -------------

struct EnaStageOptions {
    int window = 50;
    std::string grouping = "performance";  // or "level"
    std::optional<EducationLevel> filter_level;
    bool drop_unlabelled = false;
    TieRule tie = TieRule::Low;
};

struct EnaStageResult {
    std::vector<UnitId> units;               // canonical order
    std::vector<AdjacencyVector> vectors;
    EnaSpace space;
    NodeFit fit;
    std::vector<ScoreRow> scores;
    MeanNetwork network_a;
    MeanNetwork network_b;
    SubtractionNetwork subtraction;
    std::string group_a;                     // lexicographically first
    std::string group_b;
};

EnaStageResult run_ena_stage(std::span<const SessionLabels> sessions,
                             const MetadataTable& metadata, const EnaStageOptions& options);

struct CompareStageOptions {
    ModelId model = ModelId::M1;
    int bootstrap = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 42;
    TieRule tie = TieRule::Low;
    std::optional<std::string> reference_school;
};

struct CompareStageResult {
    RegressionResult regression;
    BootstrapResult bootstrap;
    std::vector<InteractionTest> interactions;
    std::array<std::string, 2> d_groups;  // (baseline, contrast) for cohens_d
};

CompareStageResult run_compare_stage(const std::map<UnitId, double>& mr1_scores,
                                     const MetadataTable& metadata,
                                     const CompareStageOptions& options);

// Runs all four stages and writes the report bundle + manifest.json.
// Returns the manifest path.
std::filesystem::path run_pipeline(PipelineConfig config);

}  // namespace tracena
