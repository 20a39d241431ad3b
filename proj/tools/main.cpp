// tracena: trace-analytics toolkit CLI.
// Subcommands: synth, map, label, ena, compare, report, pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tracena/action_mapper.hpp"
#include "tracena/ena_engine.hpp"
#include "tracena/error.hpp"
#include "tracena/pipeline.hpp"
#include "tracena/render.hpp"
#include "tracena/srl_parser.hpp"
#include "tracena/stats.hpp"
#include "tracena/synthgen.hpp"
#include "tracena/trace_model.hpp"

namespace fs = std::filesystem;
using namespace tracena;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    out << text;
}

// Sessions for mapping when no metadata sidecar is given: every pair gets a
// placeholder entry so sessionize's contract still holds.
std::vector<Session> sessionize_events(std::vector<TraceEvent> events,
                                       const std::optional<fs::path>& metadata_path,
                                       MetadataTable* metadata_out = nullptr) {
    MetadataTable metadata;
    if (metadata_path) {
        metadata = load_metadata(*metadata_path);
    } else {
        SessionMetadata placeholder;
        placeholder.task_length_minutes = 1.0;
        for (const TraceEvent& e : events) {
            metadata.emplace(UnitId{e.user_id, e.server_id}, placeholder);
        }
    }
    if (metadata_out) *metadata_out = metadata;
    return sessionize(std::move(events), metadata);
}

TraceFormat parse_trace_format(const std::string& text) {
    if (text == "delimited") return TraceFormat::Delimited;
    if (text == "tree") return TraceFormat::Tree;
    throw Error("unknown trace format \"" + text + "\" (delimited|tree)");
}

int cmd_synth(const fs::path& profile_path, const fs::path& patterns, const fs::path& actions,
              std::uint64_t seed, const fs::path& out_trace, const fs::path& out_metadata,
              bool allow_ambiguous) {
    SynthProfile profile = load_profile(profile_path);
    if (allow_ambiguous) profile.allow_ambiguous = true;
    const PatternLibrary library = PatternLibrary::load(patterns);
    const ActionConfig config = ActionConfig::load(actions);
    const GeneratedTrace trace = generate_raw_trace(profile, library, config, seed);
    write_trace(out_trace, trace.events);
    write_metadata(out_metadata, trace.metadata);
    std::cout << "synth: " << trace.metadata.size() << " units, " << trace.events.size()
              << " events (" << trace.planted_actions << " planted actions, "
              << trace.noise_action_count << " noise actions, " << trace.unmapped_event_count
              << " unmapped events)\n";
    return 0;
}

int cmd_map(const fs::path& trace_path, const std::string& format,
            const std::optional<fs::path>& metadata_path, const fs::path& actions_path,
            std::int64_t coalesce_ms, const fs::path& out,
            const std::optional<fs::path>& coverage_out) {
    const ActionConfig config = ActionConfig::load(actions_path);
    std::vector<Session> sessions =
        sessionize_events(load_trace(trace_path, parse_trace_format(format)), metadata_path);
    CoverageReport coverage;
    const std::vector<SessionActions> mapped =
        map_sessions(sessions, config, coalesce_ms, &coverage);
    write_actions_csv(out, mapped);
    std::cout << "map: " << coverage.mapped << "/" << coverage.total << " events mapped\n";
    if (coverage_out) {
        nlohmann::ordered_json doc;
        doc["total_events"] = coverage.total;
        doc["mapped_events"] = coverage.mapped;
        doc["mapped_fraction"] = coverage.mapped_fraction();
        doc["unmapped_by_kind"] = coverage.unmapped_by_kind;
        write_text(*coverage_out, doc.dump(2) + "\n");
    }
    return 0;
}

int cmd_label(const fs::path& actions_path, const fs::path& patterns_path, const fs::path& out,
              const std::optional<fs::path>& coverage_out) {
    const PatternLibrary library = PatternLibrary::load(patterns_path);
    const std::vector<SessionActions> actions = read_actions_csv(actions_path);
    const std::vector<SessionLabels> labelled = label_sessions(actions, library);
    write_labelled_csv(out, labelled);

    LabelCoverage total;
    for (const SessionLabels& session : labelled) {
        const LabelCoverage cov = label_coverage(session.labelled);
        total.total += cov.total;
        total.unlabelled += cov.unlabelled;
        for (const auto& [process, count] : cov.per_process) total.per_process[process] += count;
    }
    std::cout << "label: " << (total.total - total.unlabelled) << "/" << total.total
              << " actions labelled\n";
    if (coverage_out) {
        nlohmann::ordered_json doc;
        doc["total_actions"] = total.total;
        doc["unlabelled"] = total.unlabelled;
        doc["unlabelled_fraction"] = total.unlabelled_fraction();
        nlohmann::ordered_json per = nlohmann::ordered_json::object();
        for (const auto& [process, count] : total.per_process) {
            per[std::string(to_string(process))] = count;
        }
        doc["per_process"] = std::move(per);
        write_text(*coverage_out, doc.dump(2) + "\n");
    }
    return 0;
}

int cmd_ena(const fs::path& labelled_path, const fs::path& metadata_path, int window,
            const std::string& grouping, const std::optional<std::string>& filter_level,
            bool drop_unlabelled, const std::string& tie, const fs::path& outdir) {
    const std::vector<SessionLabels> labelled = read_labelled_csv(labelled_path);
    const MetadataTable metadata = load_metadata(metadata_path);

    EnaStageOptions options;
    options.window = window;
    options.grouping = grouping;
    if (filter_level) options.filter_level = require_education_level(*filter_level);
    options.drop_unlabelled = drop_unlabelled;
    options.tie = parse_tie_rule(tie);

    std::vector<SessionLabels> kept;
    if (options.filter_level) {
        for (const SessionLabels& session : labelled) {
            const auto meta = metadata.find(session.unit);
            if (meta != metadata.end() &&
                meta->second.education_level == *options.filter_level) {
                kept.push_back(session);
            }
        }
    } else {
        kept = labelled;
    }

    const EnaStageResult ena = run_ena_stage(kept, metadata, options);
    if (!ena.fit.goodness_of_fit.empty() && !ena.fit.goodness_of_fit[0].pearson) {
        std::cerr << "warning: goodness of fit on MR1 is undefined (zero variance)\n";
    }
    fs::create_directories(outdir);
    write_scores_csv(outdir / "scores.csv", ena.scores);
    write_space_json(outdir / "space.json", ena.space, ena.fit, window);
    write_network_json(outdir / ("network_" + ena.group_a + ".json"), ena.network_a);
    write_network_json(outdir / ("network_" + ena.group_b + ".json"), ena.network_b);
    write_subtraction_json(
        outdir / ("subtraction_" + ena.group_a + "_" + ena.group_b + ".json"), ena.subtraction);
    std::cout << "ena: " << ena.scores.size() << " units, MR1 explains "
              << ena.space.variance_explained(0) * 100.0 << "% of variance\n";
    return 0;
}

int cmd_compare(const fs::path& scores_path, const fs::path& metadata_path,
                const std::string& model, int bootstrap, double alpha, std::uint64_t seed,
                const std::string& tie, const std::optional<std::string>& reference_school,
                const fs::path& outdir) {
    const std::vector<ScoreRow> rows = read_scores_csv(scores_path);
    const MetadataTable metadata = load_metadata(metadata_path);

    std::map<UnitId, double> mr1;
    for (const ScoreRow& row : rows) mr1[row.unit] = row.mr1;

    CompareStageOptions options;
    options.model = parse_model_id(model);
    options.bootstrap = bootstrap;
    options.alpha = alpha;
    options.seed = seed;
    options.tie = parse_tie_rule(tie);
    options.reference_school = reference_school;

    const CompareStageResult result = run_compare_stage(mr1, metadata, options);
    fs::create_directories(outdir);
    const fs::path out = outdir / ("regression_" + model + ".json");
    write_regression_json(out, result.regression, result.bootstrap, result.interactions,
                          result.d_groups);
    std::cout << "compare: wrote " << out.string() << "\n";
    return 0;
}

int cmd_report(const fs::path& dir) {
    const SpaceFile space = read_space_json(dir / "space.json");
    const std::vector<ScoreRow> scores = read_scores_csv(dir / "scores.csv");

    // group means of (MR1, SVD2) for the square marks; first name gets blue
    std::map<std::string, std::array<double, 3>> acc;  // sum x, sum y, count
    for (const ScoreRow& row : scores) {
        auto& a = acc[row.group];
        a[0] += row.mr1;
        a[1] += row.svd2;
        a[2] += 1.0;
    }
    std::vector<GroupMark> marks;
    std::map<std::string, std::string> group_color;
    int idx = 0;
    for (const auto& [name, a] : acc) {
        const std::string color = idx == 0 ? "#1f77b4" : "#d62728";
        group_color[name] = color;
        marks.push_back(GroupMark{name, a[0] / a[2], a[1] / a[2], color});
        ++idx;
    }
    std::vector<std::pair<double, double>> hull;
    for (const ScoreRow& row : scores) hull.emplace_back(row.mr1, row.svd2);

    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("network_", 0) == 0 && entry.path().extension() == ".json") {
            const MeanNetwork network = read_network_json(entry.path());
            NetworkRenderOptions options;
            options.title = "mean network: " + network.group_id;
            const auto color = group_color.find(network.group_id);
            if (color != group_color.end()) options.positive_color = color->second;
            options.marks = marks;
            options.scale_hull = hull;
            write_text(dir / ("network_" + network.group_id + ".svg"),
                       render_network_svg(space.node_positions, network.edge_weights, options));
        } else if (name.rfind("subtraction_", 0) == 0 && entry.path().extension() == ".json") {
            const SubtractionNetwork sub = read_subtraction_json(entry.path());
            NetworkRenderOptions options;
            options.signed_weights = true;
            options.title = "subtraction: " + sub.group_a + " - " + sub.group_b;
            const auto color_a = group_color.find(sub.group_a);
            if (color_a != group_color.end()) options.positive_color = color_a->second;
            const auto color_b = group_color.find(sub.group_b);
            if (color_b != group_color.end()) options.negative_color = color_b->second;
            options.marks = marks;
            options.scale_hull = hull;
            write_text(dir / ("subtraction_" + sub.group_a + "_" + sub.group_b + ".svg"),
                       render_network_svg(space.node_positions, sub.signed_weights, options));
        }
    }

    std::vector<RegressionResult> results;
    for (const char* model : {"M1", "M2", "M3"}) {
        const fs::path path = dir / ("regression_" + std::string(model) + ".json");
        if (fs::exists(path)) results.push_back(read_regression_json(path));
    }
    if (!results.empty()) {
        write_text(dir / "table.txt", render_regression_table(results));
    }
    std::cout << "report: rendered into " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tracena: SRL trace analytics (map -> label -> ena -> compare)"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic trace with planted groups");
    fs::path synth_profile, synth_patterns, synth_actions, synth_out_trace, synth_out_meta;
    std::uint64_t synth_seed = 42;
    bool synth_allow_ambiguous = false;
    synth->add_option("--profile", synth_profile, "profile file")->required();
    synth->add_option("--patterns", synth_patterns, "pattern library file")->required();
    synth->add_option("--actions-config", synth_actions, "action config file")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out-trace", synth_out_trace, "trace output path")->required();
    synth->add_option("--out-metadata", synth_out_meta, "metadata output path")->required();
    synth->add_flag("--allow-ambiguous", synth_allow_ambiguous,
                    "generate even when the library is not overlap-prefix-free");

    // map
    auto* map_cmd = app.add_subcommand("map", "translate raw events into canonical actions");
    fs::path map_trace, map_actions, map_out;
    std::string map_format = "delimited";
    std::optional<fs::path> map_metadata, map_coverage;
    std::int64_t map_coalesce = 0;
    map_cmd->add_option("--trace", map_trace, "trace file")->required();
    map_cmd->add_option("--trace-format", map_format, "delimited|tree");
    map_cmd->add_option("--metadata", map_metadata, "metadata sidecar (optional here)");
    map_cmd->add_option("--actions-config", map_actions, "action config file")->required();
    map_cmd->add_option("--coalesce-ms", map_coalesce, "merge identical consecutive actions gap");
    map_cmd->add_option("--out", map_out, "actions output csv")->required();
    map_cmd->add_option("--coverage-report", map_coverage, "coverage json output");

    // label
    auto* label_cmd = app.add_subcommand("label", "label actions with SRL processes");
    fs::path label_actions_path, label_patterns, label_out;
    std::optional<fs::path> label_coverage_path;
    label_cmd->add_option("--actions", label_actions_path, "actions csv from map")->required();
    label_cmd->add_option("--patterns", label_patterns, "pattern library file")->required();
    label_cmd->add_option("--out", label_out, "labelled output csv")->required();
    label_cmd->add_option("--coverage-report", label_coverage_path, "coverage json output");

    // ena
    auto* ena_cmd = app.add_subcommand("ena", "build networks and the means-rotation space");
    fs::path ena_labelled, ena_metadata, ena_outdir = ".";
    int ena_window = 50;
    std::string ena_groups = "performance", ena_tie = "low";
    std::optional<std::string> ena_filter;
    bool ena_drop_unlabelled = false;
    ena_cmd->add_option("--labelled", ena_labelled, "labelled csv from label")->required();
    ena_cmd->add_option("--metadata", ena_metadata, "metadata csv")->required();
    ena_cmd->add_option("--window", ena_window, "moving stanza window size");
    ena_cmd->add_option("--groups", ena_groups, "grouping variable: performance|level");
    ena_cmd->add_option("--filter-level", ena_filter, "keep only SE or HE sessions");
    ena_cmd->add_flag("--drop-unlabelled", ena_drop_unlabelled,
                      "drop unlabelled lines before windowing");
    ena_cmd->add_option("--tie", ena_tie, "median tie rule: low|high");
    ena_cmd->add_option("--outdir", ena_outdir, "output directory");

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "regression comparison of ENA scores");
    fs::path cmp_scores, cmp_metadata, cmp_outdir = ".";
    std::string cmp_model = "M1", cmp_tie = "low";
    std::optional<std::string> cmp_reference;
    int cmp_bootstrap = 1000;
    double cmp_alpha = 0.05;
    std::uint64_t cmp_seed = 42;
    compare_cmd->add_option("--scores", cmp_scores, "scores.csv from ena")->required();
    compare_cmd->add_option("--metadata", cmp_metadata, "metadata csv")->required();
    compare_cmd->add_option("--model", cmp_model, "M1|M2|M3");
    compare_cmd->add_option("--bootstrap", cmp_bootstrap, "bootstrap replicates");
    compare_cmd->add_option("--alpha", cmp_alpha, "CI alpha");
    compare_cmd->add_option("--seed", cmp_seed, "bootstrap seed");
    compare_cmd->add_option("--tie", cmp_tie, "median tie rule: low|high");
    compare_cmd->add_option("--reference-school", cmp_reference, "reference school for M1");
    compare_cmd->add_option("--outdir", cmp_outdir, "output directory");

    // report
    auto* report_cmd = app.add_subcommand("report", "render networks and the regression table");
    fs::path report_dir;
    report_cmd->add_option("--dir", report_dir, "pipeline output directory")->required();

    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "run map -> label -> ena -> compare");
    fs::path pipeline_config;
    pipeline_cmd->add_option("--config", pipeline_config, "pipeline config json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_profile, synth_patterns, synth_actions, synth_seed,
                             synth_out_trace, synth_out_meta, synth_allow_ambiguous);
        }
        if (map_cmd->parsed()) {
            return cmd_map(map_trace, map_format, map_metadata, map_actions, map_coalesce,
                           map_out, map_coverage);
        }
        if (label_cmd->parsed()) {
            return cmd_label(label_actions_path, label_patterns, label_out, label_coverage_path);
        }
        if (ena_cmd->parsed()) {
            return cmd_ena(ena_labelled, ena_metadata, ena_window, ena_groups, ena_filter,
                           ena_drop_unlabelled, ena_tie, ena_outdir);
        }
        if (compare_cmd->parsed()) {
            return cmd_compare(cmp_scores, cmp_metadata, cmp_model, cmp_bootstrap, cmp_alpha,
                               cmp_seed, cmp_tie, cmp_reference, cmp_outdir);
        }
        if (report_cmd->parsed()) {
            return cmd_report(report_dir);
        }
        if (pipeline_cmd->parsed()) {
            const fs::path manifest = run_pipeline(PipelineConfig::load(pipeline_config));
            std::cout << "pipeline: wrote " << manifest.string() << "\n";
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
