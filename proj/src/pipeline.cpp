#include "tracena/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tracena/csv.hpp"
#include "tracena/error.hpp"
#include "tracena/rng.hpp"

namespace tracena {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

double parse_double(const std::string& text, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": \"" + text + "\" is not a number");
    }
}

ordered_json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open \"" + path.string() + "\"");
    try {
        return ordered_json::parse(in);
    } catch (const std::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
}

void dump_json(const std::filesystem::path& path, const ordered_json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    out << doc.dump(2) << '\n';
}

UnitId parse_unit_label(const std::string& label, const std::string& where) {
    const std::size_t slash = label.rfind('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == label.size()) {
        throw ParseError(where + ": unit_id \"" + label + "\" is not user/server");
    }
    return UnitId{label.substr(0, slash), label.substr(slash + 1)};
}

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
    try {
        return fn();
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& ex) {
        throw PipelineError(stage, ex.what());
    }
}

}  // namespace

// ---- config --------------------------------------------------------------

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    const ordered_json doc = load_json(path);
    PipelineConfig config;
    try {
        config.trace = doc.at("trace").get<std::string>();
        config.metadata = doc.at("metadata").get<std::string>();
        config.actions_config = doc.at("actions_config").get<std::string>();
        config.pattern_library = doc.at("pattern_library").get<std::string>();
        config.out_dir = doc.at("out_dir").get<std::string>();
        if (doc.value("trace_format", std::string("delimited")) == "tree") {
            config.trace_format = TraceFormat::Tree;
        }
        config.window = doc.value("window", 50);
        config.model = parse_model_id(doc.value("model", std::string("M1")));
        config.grouping = doc.value("grouping", std::string());
        if (doc.contains("filter_level")) {
            config.filter_level =
                require_education_level(doc.at("filter_level").get<std::string>());
        }
        config.bootstrap = doc.value("bootstrap", 1000);
        config.alpha = doc.value("alpha", 0.05);
        config.seed = doc.value("seed", std::uint64_t{42});
        config.tie = parse_tie_rule(doc.value("tie", std::string("low")));
        config.coalesce_ms = doc.value("coalesce_ms", std::int64_t{0});
        config.drop_unlabelled = doc.value("drop_unlabelled", false);
        if (doc.contains("reference_school")) {
            config.reference_school = doc.at("reference_school").get<std::string>();
        }
    } catch (const ordered_json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return config;
}

void PipelineConfig::validate() {
    if (window < 1) throw PipelineError("ena", "window must be >= 1");
    if (bootstrap < 100) throw PipelineError("compare", "bootstrap must be >= 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw PipelineError("compare", "alpha must be in (0, 1)");

    const std::string derived_grouping = model == ModelId::M3 ? "level" : "performance";
    if (grouping.empty()) {
        grouping = derived_grouping;
    } else if (grouping != derived_grouping) {
        throw PipelineError("ena", "model " + std::string(to_string(model)) +
                                       " requires grouping \"" + derived_grouping +
                                       "\", got \"" + grouping + "\"");
    }
    if (!filter_level) {
        if (model == ModelId::M1) filter_level = EducationLevel::SE;
        if (model == ModelId::M2) filter_level = EducationLevel::HE;
    } else if (model == ModelId::M1 && *filter_level != EducationLevel::SE) {
        throw PipelineError("ena", "model M1 analyzes the SE condition");
    } else if (model == ModelId::M2 && *filter_level != EducationLevel::HE) {
        throw PipelineError("ena", "model M2 analyzes the HE condition");
    } else if (model == ModelId::M3) {
        throw PipelineError("ena", "model M3 compares levels and cannot be filtered");
    }

    auto must_exist = [](const std::filesystem::path& p, const char* what, const char* stage) {
        if (!std::filesystem::exists(p)) {
            throw PipelineError(stage,
                                std::string(what) + " file \"" + p.string() + "\" does not exist");
        }
    };
    must_exist(trace, "trace", "map");
    must_exist(metadata, "metadata", "map");
    must_exist(actions_config, "actions config", "map");
    must_exist(pattern_library, "pattern library", "label");
}

// ---- parallel stage helpers ----------------------------------------------

std::vector<SessionActions> map_sessions(std::span<const Session> sessions,
                                         const ActionConfig& config, std::int64_t coalesce_ms,
                                         CoverageReport* coverage) {
    if (config.rules().empty()) throw Error("map_sessions: rule list is empty");
    std::vector<SessionActions> out(sessions.size());
    std::vector<MapResult> results(sessions.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(sessions.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        results[static_cast<std::size_t>(i)] =
            map_events(sessions[static_cast<std::size_t>(i)], config, coalesce_ms);
        out[static_cast<std::size_t>(i)] =
            SessionActions{sessions[static_cast<std::size_t>(i)].unit_id(),
                           std::move(results[static_cast<std::size_t>(i)].actions)};
    }
    if (coverage) {
        *coverage = CoverageReport{};
        for (std::size_t i = 0; i < sessions.size(); ++i) {
            const MapResult& r = results[i];
            SessionCoverage sc;
            sc.unit = sessions[i].unit_id();
            sc.total = r.total_events;
            sc.mapped = r.mapped_events;
            sc.unmapped_by_kind = r.unmapped_by_kind;
            coverage->total += sc.total;
            coverage->mapped += sc.mapped;
            for (const auto& [kind, count] : sc.unmapped_by_kind) {
                coverage->unmapped_by_kind[kind] += count;
            }
            coverage->sessions.push_back(std::move(sc));
        }
    }
    return out;
}

std::vector<SessionLabels> label_sessions(std::span<const SessionActions> sessions,
                                          const PatternLibrary& library) {
    if (library.empty()) throw Error("label_sessions: pattern library is empty");
    std::vector<SessionLabels> out(sessions.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(sessions.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& s = sessions[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(i)] = SessionLabels{s.unit, label_actions(s.actions, library)};
    }
    return out;
}

// ---- artifact files --------------------------------------------------------

void write_actions_csv(const std::filesystem::path& path,
                       std::span<const SessionActions> sessions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    csv::write_row(out, {"user_id", "server_id", "timestamp", "main_action", "sub_action",
                         "span_start", "span_end"});
    for (const auto& session : sessions) {
        for (const Action& a : session.actions) {
            csv::write_row(out, {session.unit.user_id, session.unit.server_id,
                                 std::to_string(a.timestamp_ms), std::string(to_string(a.main_action)),
                                 a.sub_action, std::to_string(a.source_span.first),
                                 std::to_string(a.source_span.second)});
        }
    }
}

std::vector<SessionActions> read_actions_csv(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) throw ParseError(path.string() + ": empty file");

    std::vector<SessionActions> sessions;
    std::map<UnitId, std::size_t> index;
    while (reader.next(fields)) {
        const std::string where = path.string() + ": row " + std::to_string(reader.row_number());
        if (fields.size() != 7) throw ParseError(where + ": expected 7 fields");
        UnitId unit{fields[0], fields[1]};
        auto [it, inserted] = index.emplace(unit, sessions.size());
        if (inserted) sessions.push_back(SessionActions{unit, {}});

        Action a;
        a.timestamp_ms = static_cast<std::int64_t>(parse_double(fields[2], where));
        a.main_action = require_main_action(fields[3]);
        a.sub_action = fields[4];
        a.source_span = {static_cast<std::size_t>(std::stoull(fields[5])),
                         static_cast<std::size_t>(std::stoull(fields[6]))};
        sessions[it->second].actions.push_back(std::move(a));
    }
    return sessions;
}

void write_labelled_csv(const std::filesystem::path& path,
                        std::span<const SessionLabels> sessions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    csv::write_row(out, {"user_id", "server_id", "timestamp", "main_action", "sub_action",
                         "process", "pattern_id", "match_position"});
    for (const auto& session : sessions) {
        for (const LabelledAction& la : session.labelled) {
            csv::write_row(out,
                           {session.unit.user_id, session.unit.server_id,
                            std::to_string(la.action.timestamp_ms),
                            std::string(to_string(la.action.main_action)), la.action.sub_action,
                            la.process ? std::string(to_string(*la.process)) : std::string(),
                            la.pattern_id.value_or(std::string()),
                            la.match_position ? std::to_string(*la.match_position) : std::string()});
        }
    }
}

std::vector<SessionLabels> read_labelled_csv(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) throw ParseError(path.string() + ": empty file");

    std::vector<SessionLabels> sessions;
    std::map<UnitId, std::size_t> index;
    while (reader.next(fields)) {
        const std::string where = path.string() + ": row " + std::to_string(reader.row_number());
        if (fields.size() != 8) throw ParseError(where + ": expected 8 fields");
        UnitId unit{fields[0], fields[1]};
        auto [it, inserted] = index.emplace(unit, sessions.size());
        if (inserted) sessions.push_back(SessionLabels{unit, {}});
        auto& labelled = sessions[it->second].labelled;

        LabelledAction la;
        la.action.timestamp_ms = static_cast<std::int64_t>(parse_double(fields[2], where));
        la.action.main_action = require_main_action(fields[3]);
        la.action.sub_action = fields[4];
        la.action.source_span = {labelled.size(), labelled.size() + 1};
        if (!fields[5].empty()) {
            la.process = require_srl_process(fields[5]);
            if (fields[6].empty() || fields[7].empty()) {
                throw ParseError(where + ": labelled row missing pattern_id or match_position");
            }
            la.pattern_id = fields[6];
            la.match_position = std::stoi(fields[7]);
        } else if (!fields[6].empty() || !fields[7].empty()) {
            throw ParseError(where + ": unlabelled row carries pattern fields");
        }
        labelled.push_back(std::move(la));
    }
    return sessions;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    csv::write_row(out, {"unit_id", "MR1", "SVD2", "group"});
    for (const ScoreRow& row : rows) {
        csv::write_row(out, {row.unit.label(), format_double(row.mr1), format_double(row.svd2),
                             row.group});
    }
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) throw ParseError(path.string() + ": empty file");
    std::vector<ScoreRow> rows;
    while (reader.next(fields)) {
        const std::string where = path.string() + ": row " + std::to_string(reader.row_number());
        if (fields.size() != 4) throw ParseError(where + ": expected 4 fields");
        rows.push_back(ScoreRow{parse_unit_label(fields[0], where),
                                parse_double(fields[1], where), parse_double(fields[2], where),
                                fields[3]});
    }
    return rows;
}

namespace {

ordered_json edges_to_json(std::span<const double> weights) {
    ordered_json edges = ordered_json::object();
    for (int p = 0; p < kPairCount; ++p) edges[pair_name(p)] = weights[static_cast<std::size_t>(p)];
    return edges;
}

std::array<double, kPairCount> edges_from_json(const ordered_json& edges,
                                               const std::string& where) {
    std::array<double, kPairCount> weights{};
    for (int p = 0; p < kPairCount; ++p) {
        const std::string name = pair_name(p);
        if (!edges.contains(name)) throw ParseError(where + ": missing edge \"" + name + "\"");
        weights[static_cast<std::size_t>(p)] = edges.at(name).get<double>();
    }
    return weights;
}

}  // namespace

void write_network_json(const std::filesystem::path& path, const MeanNetwork& network) {
    ordered_json doc;
    doc["group"] = network.group_id;
    doc["member_count"] = network.member_count;
    doc["edges"] = edges_to_json(network.edge_weights);
    dump_json(path, doc);
}

MeanNetwork read_network_json(const std::filesystem::path& path) {
    const ordered_json doc = load_json(path);
    MeanNetwork network;
    network.group_id = doc.at("group").get<std::string>();
    network.member_count = doc.at("member_count").get<int>();
    network.edge_weights = edges_from_json(doc.at("edges"), path.string());
    return network;
}

void write_subtraction_json(const std::filesystem::path& path, const SubtractionNetwork& sub) {
    ordered_json doc;
    doc["group_a"] = sub.group_a;
    doc["group_b"] = sub.group_b;
    doc["edges"] = edges_to_json(sub.signed_weights);
    dump_json(path, doc);
}

SubtractionNetwork read_subtraction_json(const std::filesystem::path& path) {
    const ordered_json doc = load_json(path);
    SubtractionNetwork sub;
    sub.group_a = doc.at("group_a").get<std::string>();
    sub.group_b = doc.at("group_b").get<std::string>();
    sub.signed_weights = edges_from_json(doc.at("edges"), path.string());
    return sub;
}

namespace {

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const ordered_json& rows) {
    const auto n_rows = static_cast<Eigen::Index>(rows.size());
    const auto n_cols = n_rows > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXd m(n_rows, n_cols);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        for (Eigen::Index c = 0; c < n_cols; ++c) {
            m(r, c) = rows.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

ordered_json vector_to_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vector_from_json(const ordered_json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = arr.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

}  // namespace

void write_space_json(const std::filesystem::path& path, const EnaSpace& space,
                      const NodeFit& fit, int window) {
    ordered_json doc;
    doc["window"] = window;
    doc["codes"] = ordered_json::array();
    for (int i = 0; i < kProcessCount; ++i) {
        doc["codes"].push_back(std::string(to_string(static_cast<SrlProcess>(i))));
    }
    doc["centroid_form"] = "(x_i+x_j)/2";
    doc["referent_included_in_window"] = true;
    doc["grand_mean"] = vector_to_json(space.grand_mean);
    doc["variance_explained"] = vector_to_json(space.variance_explained);
    doc["basis"] = matrix_to_json(space.basis);
    doc["node_positions"] = matrix_to_json(fit.node_positions);
    ordered_json gof = ordered_json::array();
    for (const DimensionFit& d : fit.goodness_of_fit) {
        ordered_json item;
        if (d.pearson) {
            item["pearson"] = *d.pearson;
        } else {
            item["pearson"] = nullptr;
        }
        if (d.spearman) {
            item["spearman"] = *d.spearman;
        } else {
            item["spearman"] = nullptr;
        }
        gof.push_back(std::move(item));
    }
    doc["goodness_of_fit"] = std::move(gof);
    doc["projected_only_units"] = space.projected_only;
    doc["node_fit_excluded_units"] = fit.excluded_units;
    dump_json(path, doc);
}

SpaceFile read_space_json(const std::filesystem::path& path) {
    const ordered_json doc = load_json(path);
    SpaceFile space;
    space.window = doc.at("window").get<int>();
    space.grand_mean = vector_from_json(doc.at("grand_mean"));
    space.variance_explained = vector_from_json(doc.at("variance_explained"));
    space.basis = matrix_from_json(doc.at("basis"));
    space.node_positions = matrix_from_json(doc.at("node_positions"));
    for (const auto& item : doc.at("goodness_of_fit")) {
        DimensionFit fit;
        if (!item.at("pearson").is_null()) fit.pearson = item.at("pearson").get<double>();
        if (!item.at("spearman").is_null()) fit.spearman = item.at("spearman").get<double>();
        space.goodness_of_fit.push_back(fit);
    }
    return space;
}

void write_regression_json(const std::filesystem::path& path, const RegressionResult& result,
                           const BootstrapResult& bootstrap,
                           std::span<const InteractionTest> interactions,
                           const std::array<std::string, 2>& d_groups) {
    ordered_json doc;
    doc["model"] = std::string(to_string(result.model_id));
    doc["n_obs"] = result.n_obs;
    ordered_json coef = ordered_json::object();
    for (std::size_t i = 0; i < result.column_names.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        ordered_json entry;
        entry["beta"] = result.coefficients(c);
        entry["se"] = result.standard_errors(c);
        entry["t"] = result.t_values(c);
        entry["p"] = result.p_values(c);
        if (i < bootstrap.ci.size()) {
            entry["bootstrap_ci"] = ordered_json::array({bootstrap.ci[i].first,
                                                         bootstrap.ci[i].second});
        }
        coef[result.column_names[i]] = std::move(entry);
    }
    doc["coefficients"] = std::move(coef);
    doc["r_squared"] = result.r_squared;
    doc["residual_se"] = result.residual_se;
    doc["f_value"] = result.f_value;
    doc["f_p_value"] = result.f_p_value;
    ordered_json inter = ordered_json::array();
    for (const InteractionTest& test : interactions) {
        ordered_json item;
        item["covariate"] = test.covariate;
        item["beta"] = test.coefficient;
        item["p"] = test.p_value;
        inter.push_back(std::move(item));
    }
    doc["interactions"] = std::move(inter);
    if (result.cohens_d) {
        // the CI belongs to d itself, kept separate from the beta CIs above
        doc["cohens_d"] = ordered_json::object();
        doc["cohens_d"]["groups"] = ordered_json::array({d_groups[0], d_groups[1]});
        doc["cohens_d"]["value"] = *result.cohens_d;
        if (result.cohens_d_ci) {
            doc["cohens_d"]["bootstrap_ci"] = ordered_json::array(
                {result.cohens_d_ci->first, result.cohens_d_ci->second});
        }
    }
    doc["bootstrap_redraws"] = bootstrap.redraws;
    dump_json(path, doc);
}

RegressionResult read_regression_json(const std::filesystem::path& path) {
    const ordered_json doc = load_json(path);
    RegressionResult result;
    result.model_id = parse_model_id(doc.at("model").get<std::string>());
    result.n_obs = doc.at("n_obs").get<int>();
    const auto& coef = doc.at("coefficients");
    const auto k = static_cast<Eigen::Index>(coef.size());
    result.coefficients.resize(k);
    result.standard_errors.resize(k);
    result.t_values.resize(k);
    result.p_values.resize(k);
    Eigen::Index c = 0;
    for (const auto& [name, entry] : coef.items()) {
        result.column_names.push_back(name);
        result.coefficients(c) = entry.at("beta").get<double>();
        result.standard_errors(c) = entry.at("se").get<double>();
        result.t_values(c) = entry.at("t").get<double>();
        result.p_values(c) = entry.at("p").get<double>();
        if (entry.contains("bootstrap_ci")) {
            result.bootstrap_ci.emplace_back(entry.at("bootstrap_ci").at(0).get<double>(),
                                             entry.at("bootstrap_ci").at(1).get<double>());
        }
        ++c;
    }
    result.r_squared = doc.at("r_squared").get<double>();
    result.residual_se = doc.at("residual_se").get<double>();
    result.f_value = doc.at("f_value").get<double>();
    result.f_p_value = doc.at("f_p_value").get<double>();
    if (doc.contains("cohens_d")) {
        result.cohens_d = doc.at("cohens_d").at("value").get<double>();
        if (doc.at("cohens_d").contains("bootstrap_ci")) {
            result.cohens_d_ci = {doc.at("cohens_d").at("bootstrap_ci").at(0).get<double>(),
                                  doc.at("cohens_d").at("bootstrap_ci").at(1).get<double>()};
        }
    }
    return result;
}

// ---- ena stage -------------------------------------------------------------

EnaStageResult run_ena_stage(std::span<const SessionLabels> sessions,
                             const MetadataTable& metadata, const EnaStageOptions& options) {
    if (sessions.empty()) throw Error("ena: no labelled sessions");

    std::vector<CodedUnit> units;
    units.reserve(sessions.size());
    for (const SessionLabels& session : sessions) {
        units.push_back(
            coded_unit_from_labels(session.unit, session.labelled, options.drop_unlabelled));
    }
    std::sort(units.begin(), units.end(),
              [](const CodedUnit& a, const CodedUnit& b) { return a.unit < b.unit; });

    EnaStageResult result;
    result.vectors = accumulate_all(units, options.window);
    for (const CodedUnit& unit : units) result.units.push_back(unit.unit);

    // group names per unit
    std::map<UnitId, std::string> group_of;
    if (options.grouping == "level") {
        for (const UnitId& unit : result.units) {
            const auto meta = metadata.find(unit);
            if (meta == metadata.end()) throw Error("ena: no metadata for " + unit.label());
            group_of[unit] = std::string(to_string(meta->second.education_level));
        }
    } else if (options.grouping == "performance") {
        std::map<UnitId, double> essay_se, essay_he;
        for (const UnitId& unit : result.units) {
            const auto meta = metadata.find(unit);
            if (meta == metadata.end()) throw Error("ena: no metadata for " + unit.label());
            (meta->second.education_level == EducationLevel::SE ? essay_se : essay_he)
                .emplace(unit, meta->second.essay_score);
        }
        std::map<UnitId, PerfGroup> split;
        if (!essay_se.empty()) split.merge(median_split(essay_se, options.tie));
        if (!essay_he.empty()) split.merge(median_split(essay_he, options.tie));
        for (const auto& [unit, group] : split) group_of[unit] = std::string(to_string(group));
    } else {
        throw Error("ena: unknown grouping \"" + options.grouping + "\" (performance|level)");
    }

    std::set<std::string> names;
    for (const auto& [unit, name] : group_of) names.insert(name);
    if (names.size() != 2) {
        throw Error("ena: grouping \"" + options.grouping + "\" produced " +
                    std::to_string(names.size()) + " group(s), need exactly 2");
    }
    result.group_a = *names.begin();
    result.group_b = *std::next(names.begin());

    const CenteredData centered = normalize_and_center(result.vectors);
    std::vector<int> groups(result.units.size());
    std::vector<std::size_t> members_a, members_b;
    for (std::size_t i = 0; i < result.units.size(); ++i) {
        const bool in_a = group_of.at(result.units[i]) == result.group_a;
        (in_a ? members_a : members_b).push_back(i);
        groups[i] = result.vectors[i].is_zero() ? -1 : (in_a ? 0 : 1);
    }

    result.space = means_rotation(centered, groups);
    result.fit = fit_node_positions(result.space, result.vectors);

    for (std::size_t i = 0; i < result.units.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        ScoreRow score;
        score.unit = result.units[i];
        score.mr1 = result.space.scores(row, 0);
        score.svd2 = result.space.scores.cols() > 1 ? result.space.scores(row, 1) : 0.0;
        score.group = group_of.at(result.units[i]);
        result.scores.push_back(std::move(score));
    }

    result.network_a = mean_network(result.vectors, members_a, result.group_a);
    result.network_b = mean_network(result.vectors, members_b, result.group_b);
    result.subtraction = subtract_networks(result.network_a, result.network_b);
    return result;
}

// ---- compare stage -----------------------------------------------------------

namespace {

// Percentile bootstrap for Cohen's d over (score, factor) rows. Streams are
// offset far away from the coefficient bootstrap so the two never overlap.
std::pair<double, double> bootstrap_cohens_d_ci(const std::vector<double>& scores,
                                                const std::vector<int>& factor, int replicates,
                                                double alpha, std::uint64_t seed) {
    constexpr std::uint64_t kStreamOffset = std::uint64_t{1} << 32;
    const std::size_t n = scores.size();
    const std::int64_t budget = 10LL * replicates;

    std::vector<double> draws(static_cast<std::size_t>(replicates));
    std::vector<std::int64_t> redraws(static_cast<std::size_t>(replicates), 0);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < replicates; ++b) {
        auto stream = rng::make_stream(seed, kStreamOffset + static_cast<std::uint64_t>(b));
        std::vector<double> g0, g1;
        std::int64_t attempts = 0;
        while (true) {
            g0.clear();
            g1.clear();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t pick = rng::uniform_index(stream, n);
                (factor[pick] == 0 ? g0 : g1).push_back(scores[pick]);
            }
            if (g0.size() >= 2 && g1.size() >= 2) {
                bool computed = false;
                try {
                    draws[static_cast<std::size_t>(b)] = cohens_d(g0, g1);
                    computed = true;
                } catch (const Error&) {
                    computed = false;  // zero pooled sd, redraw
                }
                if (computed) break;
            }
            if (++attempts > budget) {
                draws[static_cast<std::size_t>(b)] = 0.0;
                break;
            }
        }
        redraws[static_cast<std::size_t>(b)] = attempts;
    }
    std::int64_t total_redraws = 0;
    for (const auto r : redraws) total_redraws += r;
    if (total_redraws > budget) {
        throw Error("cohens_d bootstrap: persistent degenerate resamples");
    }
    std::sort(draws.begin(), draws.end());
    auto quant = [&](double q) {
        const double h = q * static_cast<double>(draws.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        if (lo + 1 >= draws.size()) return draws.back();
        return draws[lo] + (h - static_cast<double>(lo)) * (draws[lo + 1] - draws[lo]);
    };
    return {quant(alpha / 2.0), quant(1.0 - alpha / 2.0)};
}

}  // namespace

CompareStageResult run_compare_stage(const std::map<UnitId, double>& mr1_scores,
                                     const MetadataTable& metadata,
                                     const CompareStageOptions& options) {
    const DesignMatrix design = build_design(mr1_scores, metadata, options.model, options.tie,
                                             options.reference_school);

    CompareStageResult result;
    result.regression = ols_fit(design);

    const std::string factor =
        options.model == ModelId::M3 ? "level_SE" : "performance_low";
    result.interactions = interaction_scan(design, factor);

    BootstrapOptions boot;
    boot.replicates = options.bootstrap;
    boot.alpha = options.alpha;
    boot.seed = options.seed;
    result.bootstrap = bootstrap_ci(design, boot);

    // Cohen's d between the factor levels: baseline group first
    const int fcol = design.column(factor);
    std::vector<double> baseline, contrast;
    std::vector<double> scores;
    std::vector<int> factor_values;
    for (Eigen::Index r = 0; r < design.n(); ++r) {
        const double value = design.columns(r, fcol);
        scores.push_back(design.response(r));
        factor_values.push_back(value > 0.5 ? 1 : 0);
        (value > 0.5 ? contrast : baseline).push_back(design.response(r));
    }
    result.regression.cohens_d = cohens_d(baseline, contrast);
    result.regression.cohens_d_ci = bootstrap_cohens_d_ci(
        scores, factor_values, options.bootstrap, options.alpha, options.seed);
    result.regression.bootstrap_ci = result.bootstrap.ci;
    result.d_groups = options.model == ModelId::M3 ? std::array<std::string, 2>{"HE", "SE"}
                                                   : std::array<std::string, 2>{"high", "low"};
    return result;
}

// ---- full pipeline -----------------------------------------------------------

std::filesystem::path run_pipeline(PipelineConfig config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    const auto out = [&](const std::string& name) { return config.out_dir / name; };

    ordered_json manifest;
    manifest["tool"] = "tracena";
    manifest["version"] = std::string(kToolVersion);
    {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
        manifest["generated_at"] = buf;  // the only run-dependent output byte
    }
    manifest["stages"] = ordered_json::array({"map", "label", "ena", "compare"});
    manifest["rng"] = "mt19937_64, splitmix64-derived per-item streams, modulo index draws, "
                      "Box-Muller normals";
    ordered_json decisions;
    decisions["window"] = config.window;
    decisions["seed"] = config.seed;
    decisions["tie_rule"] = config.tie == TieRule::Low ? "low" : "high";
    decisions["drop_unlabelled"] = config.drop_unlabelled;
    decisions["coalesce_ms"] = config.coalesce_ms;
    decisions["grouping"] = config.grouping;
    decisions["filter_level"] =
        config.filter_level ? ordered_json(std::string(to_string(*config.filter_level)))
                            : ordered_json(nullptr);
    decisions["model"] = std::string(to_string(config.model));
    decisions["bootstrap_replicates"] = config.bootstrap;
    decisions["alpha"] = config.alpha;
    decisions["reference_school"] = config.reference_school
                                        ? ordered_json(*config.reference_school)
                                        : ordered_json(nullptr);
    decisions["accumulation"] = "binary moving stanza, referent included";
    decisions["centroid_form"] = "(x_i+x_j)/2";
    decisions["node_fit"] = "minimum-norm least squares";
    manifest["decisions"] = std::move(decisions);
    ordered_json outputs = ordered_json::object();

    // ---- map ----
    MetadataTable metadata;
    std::vector<SessionActions> actions;
    CoverageReport map_cov;
    std::size_t filtered_out = 0;
    run_stage("map", [&] {
        const std::vector<TraceEvent> events = load_trace(config.trace, config.trace_format);
        metadata = load_metadata(config.metadata);
        std::vector<Session> sessions = sessionize(std::move(events), metadata);
        if (config.filter_level) {
            std::vector<Session> kept;
            for (auto& session : sessions) {
                if (session.metadata.education_level == *config.filter_level) {
                    kept.push_back(std::move(session));
                } else {
                    ++filtered_out;
                }
            }
            sessions = std::move(kept);
            if (sessions.empty()) {
                throw Error("no sessions left after filtering level " +
                            std::string(to_string(*config.filter_level)));
            }
        }
        const ActionConfig action_config = ActionConfig::load(config.actions_config);
        actions = map_sessions(sessions, action_config, config.coalesce_ms, &map_cov);
        write_actions_csv(out("actions.csv"), actions);

        ordered_json cov;
        cov["total_events"] = map_cov.total;
        cov["mapped_events"] = map_cov.mapped;
        cov["mapped_fraction"] = map_cov.mapped_fraction();
        cov["unmapped_by_kind"] = map_cov.unmapped_by_kind;
        ordered_json per_session = ordered_json::array();
        for (const SessionCoverage& sc : map_cov.sessions) {
            ordered_json item;
            item["unit"] = sc.unit.label();
            item["total"] = sc.total;
            item["mapped"] = sc.mapped;
            per_session.push_back(std::move(item));
        }
        cov["sessions"] = std::move(per_session);
        dump_json(out("map_coverage.json"), cov);
        return 0;
    });
    outputs["actions"] = "actions.csv";
    outputs["map_coverage"] = "map_coverage.json";
    manifest["sessions_filtered_out"] = filtered_out;

    // ---- label ----
    std::vector<SessionLabels> labelled;
    run_stage("label", [&] {
        const PatternLibrary library = PatternLibrary::load(config.pattern_library);
        labelled = label_sessions(actions, library);
        write_labelled_csv(out("labelled.csv"), labelled);

        LabelCoverage total;
        for (const SessionLabels& session : labelled) {
            const LabelCoverage cov = label_coverage(session.labelled);
            total.total += cov.total;
            total.unlabelled += cov.unlabelled;
            for (const auto& [process, count] : cov.per_process) {
                total.per_process[process] += count;
            }
        }
        ordered_json cov;
        cov["total_actions"] = total.total;
        cov["unlabelled"] = total.unlabelled;
        cov["unlabelled_fraction"] = total.unlabelled_fraction();
        ordered_json per_process = ordered_json::object();
        for (const auto& [process, count] : total.per_process) {
            per_process[std::string(to_string(process))] = count;
        }
        cov["per_process"] = std::move(per_process);
        dump_json(out("label_coverage.json"), cov);
        return 0;
    });
    outputs["labelled"] = "labelled.csv";
    outputs["label_coverage"] = "label_coverage.json";

    // ---- ena ----
    EnaStageResult ena;
    run_stage("ena", [&] {
        EnaStageOptions options;
        options.window = config.window;
        options.grouping = config.grouping;
        options.filter_level = config.filter_level;
        options.drop_unlabelled = config.drop_unlabelled;
        options.tie = config.tie;
        ena = run_ena_stage(labelled, metadata, options);
        write_scores_csv(out("scores.csv"), ena.scores);
        write_space_json(out("space.json"), ena.space, ena.fit, config.window);
        write_network_json(out("network_" + ena.group_a + ".json"), ena.network_a);
        write_network_json(out("network_" + ena.group_b + ".json"), ena.network_b);
        write_subtraction_json(
            out("subtraction_" + ena.group_a + "_" + ena.group_b + ".json"), ena.subtraction);
        return 0;
    });
    outputs["scores"] = "scores.csv";
    outputs["space"] = "space.json";
    outputs["network_a"] = "network_" + ena.group_a + ".json";
    outputs["network_b"] = "network_" + ena.group_b + ".json";
    outputs["subtraction"] = "subtraction_" + ena.group_a + "_" + ena.group_b + ".json";

    // ---- compare ----
    run_stage("compare", [&] {
        std::map<UnitId, double> mr1;
        for (const ScoreRow& row : ena.scores) mr1[row.unit] = row.mr1;
        CompareStageOptions options;
        options.model = config.model;
        options.bootstrap = config.bootstrap;
        options.alpha = config.alpha;
        options.seed = config.seed;
        options.tie = config.tie;
        options.reference_school = config.reference_school;
        const CompareStageResult compare = run_compare_stage(mr1, metadata, options);
        write_regression_json(out("regression_" + std::string(to_string(config.model)) + ".json"),
                              compare.regression, compare.bootstrap, compare.interactions,
                              compare.d_groups);
        return 0;
    });
    outputs["regression"] = "regression_" + std::string(to_string(config.model)) + ".json";

    manifest["outputs"] = std::move(outputs);
    const auto manifest_path = out("manifest.json");
    dump_json(manifest_path, manifest);
    return manifest_path;
}

}  // namespace tracena
