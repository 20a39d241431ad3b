#include "tracena/trace_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "tracena/csv.hpp"
#include "tracena/error.hpp"

namespace tracena {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kTraceHeader = {
    "timestamp", "user_id", "server_id", "event_kind", "target", "detail"};
const std::vector<std::string> kMetadataHeader = {
    "user_id", "server_id", "level",      "school",
    "essay_score", "pretest_score", "cet4_score", "task_length_minutes"};

std::int64_t parse_timestamp(const std::string& text, const std::string& where) {
    std::int64_t value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError(where + ": timestamp \"" + text + "\" is not an integer");
    }
    return value;
}

double parse_real(const std::string& text, const std::string& where, const char* field) {
    try {
        std::size_t pos = 0;
        const double value = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw ParseError(where + ": field " + field + " \"" + text + "\" is not a number");
    }
}

void check_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                  const std::string& path) {
    if (got != want) {
        std::string expect;
        for (std::size_t i = 0; i < want.size(); ++i) {
            if (i) expect += ',';
            expect += want[i];
        }
        throw ParseError(path + ": row 1: expected header \"" + expect + "\"");
    }
}

// Shifts each (user, server) group so its earliest timestamp becomes 0.
void rebase(std::vector<TraceEvent>& events) {
    std::map<UnitId, std::int64_t> start;
    for (const auto& e : events) {
        const UnitId id{e.user_id, e.server_id};
        auto [it, inserted] = start.emplace(id, e.timestamp_ms);
        if (!inserted) it->second = std::min(it->second, e.timestamp_ms);
    }
    for (auto& e : events) {
        e.timestamp_ms -= start.at({e.user_id, e.server_id});
    }
}

std::vector<TraceEvent> load_trace_delimited(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) throw ParseError(path.string() + ": empty file");
    check_header(fields, kTraceHeader, path.string());

    std::vector<TraceEvent> events;
    while (reader.next(fields)) {
        const std::string where = path.string() + ": row " + std::to_string(reader.row_number());
        if (fields.size() != kTraceHeader.size()) {
            throw ParseError(where + ": expected " + std::to_string(kTraceHeader.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        TraceEvent e;
        e.timestamp_ms = parse_timestamp(fields[0], where);
        e.user_id = std::move(fields[1]);
        e.server_id = std::move(fields[2]);
        e.event_kind = std::move(fields[3]);
        e.target = std::move(fields[4]);
        e.detail = parse_detail(fields[5]);
        if (e.user_id.empty()) throw ParseError(where + ": user_id is empty");
        if (e.server_id.empty()) throw ParseError(where + ": server_id is empty");
        events.push_back(std::move(e));
    }
    return events;
}

std::vector<TraceEvent> load_trace_tree(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open \"" + path.string() + "\"");
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const std::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    if (!doc.is_array()) throw ParseError(path.string() + ": expected a top-level array");

    std::vector<TraceEvent> events;
    std::size_t row = 0;
    for (const auto& item : doc) {
        ++row;
        const std::string where = path.string() + ": record " + std::to_string(row);
        try {
            TraceEvent e;
            e.timestamp_ms = item.at("timestamp").get<std::int64_t>();
            e.user_id = item.at("user_id").get<std::string>();
            e.server_id = item.at("server_id").get<std::string>();
            e.event_kind = item.at("event_kind").get<std::string>();
            e.target = item.value("target", std::string());
            if (item.contains("detail")) {
                for (const auto& kv : item.at("detail")) {
                    e.detail.emplace_back(kv.at(0).get<std::string>(),
                                          kv.at(1).get<std::string>());
                }
            }
            if (e.user_id.empty()) throw ParseError(where + ": user_id is empty");
            if (e.server_id.empty()) throw ParseError(where + ": server_id is empty");
            events.push_back(std::move(e));
        } catch (const ordered_json::exception& ex) {
            throw ParseError(where + ": " + ex.what());
        }
    }
    return events;
}

}  // namespace

std::string_view to_string(EducationLevel level) {
    return level == EducationLevel::SE ? "SE" : "HE";
}

EducationLevel require_education_level(std::string_view token) {
    if (token == "SE") return EducationLevel::SE;
    if (token == "HE") return EducationLevel::HE;
    throw ParseError("unknown education level \"" + std::string(token) + "\"");
}

std::string serialize_detail(const std::vector<std::pair<std::string, std::string>>& detail) {
    std::string out;
    for (std::size_t i = 0; i < detail.size(); ++i) {
        if (i) out += ';';
        out += detail[i].first;
        out += '=';
        out += detail[i].second;
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_detail(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> detail;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find(';', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view item = text.substr(pos, end - pos);
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) {
            detail.emplace_back(std::string(item), std::string());
        } else {
            detail.emplace_back(std::string(item.substr(0, eq)),
                                std::string(item.substr(eq + 1)));
        }
        pos = end + 1;
    }
    return detail;
}

std::vector<TraceEvent> load_trace(const std::filesystem::path& path, TraceFormat format,
                                   bool rebase_timestamps) {
    std::vector<TraceEvent> events = format == TraceFormat::Delimited
                                         ? load_trace_delimited(path)
                                         : load_trace_tree(path);
    if (rebase_timestamps) rebase(events);
    return events;
}

void write_trace(std::ostream& out, std::span<const TraceEvent> events, TraceFormat format) {
    if (format == TraceFormat::Delimited) {
        csv::write_row(out, kTraceHeader);
        for (const auto& e : events) {
            csv::write_field(out, std::to_string(e.timestamp_ms));
            out << ',';
            csv::write_field(out, e.user_id);
            out << ',';
            csv::write_field(out, e.server_id);
            out << ',';
            csv::write_field(out, e.event_kind);
            out << ',';
            csv::write_field(out, e.target);
            out << ',';
            csv::write_field(out, serialize_detail(e.detail), /*force_quote=*/true);
            out << '\n';
        }
        return;
    }
    ordered_json doc = ordered_json::array();
    for (const auto& e : events) {
        ordered_json item;
        item["timestamp"] = e.timestamp_ms;
        item["user_id"] = e.user_id;
        item["server_id"] = e.server_id;
        item["event_kind"] = e.event_kind;
        item["target"] = e.target;
        ordered_json detail = ordered_json::array();
        for (const auto& [k, v] : e.detail) detail.push_back(ordered_json::array({k, v}));
        item["detail"] = std::move(detail);
        doc.push_back(std::move(item));
    }
    out << doc.dump(2) << '\n';
}

void write_trace(const std::filesystem::path& path, std::span<const TraceEvent> events,
                 TraceFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    write_trace(out, events, format);
}

MetadataTable load_metadata(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) throw ParseError(path.string() + ": empty file");
    check_header(fields, kMetadataHeader, path.string());

    MetadataTable table;
    while (reader.next(fields)) {
        const std::string where = path.string() + ": row " + std::to_string(reader.row_number());
        if (fields.size() != kMetadataHeader.size()) {
            throw ParseError(where + ": expected " + std::to_string(kMetadataHeader.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        UnitId id{fields[0], fields[1]};
        if (id.user_id.empty()) throw ParseError(where + ": user_id is empty");
        if (id.server_id.empty()) throw ParseError(where + ": server_id is empty");

        SessionMetadata meta;
        try {
            meta.education_level = require_education_level(fields[2]);
        } catch (const ParseError& ex) {
            throw ParseError(where + ": " + ex.what());
        }
        meta.school_id = fields[3];
        meta.essay_score = parse_real(fields[4], where, "essay_score");
        meta.pretest_score = parse_real(fields[5], where, "pretest_score");
        if (!fields[6].empty()) {
            if (meta.education_level != EducationLevel::HE) {
                throw ParseError(where + ": cet4_score is only valid for HE participants");
            }
            meta.cet4_score = parse_real(fields[6], where, "cet4_score");
        }
        meta.task_length_minutes = parse_real(fields[7], where, "task_length_minutes");
        if (meta.task_length_minutes <= 0) {
            throw ParseError(where + ": task_length_minutes must be > 0");
        }
        if (meta.essay_score < 0) throw ParseError(where + ": essay_score must be >= 0");
        if (meta.pretest_score < 0 || meta.pretest_score > 15) {
            throw ParseError(where + ": pretest_score must be in [0, 15]");
        }
        if (!table.emplace(std::move(id), std::move(meta)).second) {
            throw ParseError(where + ": duplicate (user_id, server_id) entry");
        }
    }
    return table;
}

void write_metadata(const std::filesystem::path& path, const MetadataTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write \"" + path.string() + "\"");
    csv::write_row(out, kMetadataHeader);
    auto real = [](double v) {
        std::string s = std::to_string(v);
        // trim trailing zeros but keep one decimal
        while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
        return s;
    };
    for (const auto& [id, meta] : table) {
        std::vector<std::string> fields = {
            id.user_id,
            id.server_id,
            std::string(to_string(meta.education_level)),
            meta.school_id,
            real(meta.essay_score),
            real(meta.pretest_score),
            meta.cet4_score ? real(*meta.cet4_score) : std::string(),
            real(meta.task_length_minutes),
        };
        csv::write_row(out, fields);
    }
}

std::vector<Session> sessionize(std::vector<TraceEvent> events, const MetadataTable& metadata) {
    if (events.empty()) throw Error("sessionize: no events");

    std::map<UnitId, std::vector<TraceEvent>> groups;
    for (auto& e : events) {
        groups[{e.user_id, e.server_id}].push_back(std::move(e));
    }

    std::vector<Session> sessions;
    sessions.reserve(groups.size());
    for (auto& [id, group] : groups) {
        const auto meta = metadata.find(id);
        if (meta == metadata.end()) {
            throw Error("sessionize: no metadata for (" + id.user_id + ", " + id.server_id + ")");
        }
        std::stable_sort(group.begin(), group.end(),
                         [](const TraceEvent& a, const TraceEvent& b) {
                             return a.timestamp_ms < b.timestamp_ms;
                         });
        sessions.push_back({id.user_id, id.server_id, std::move(group), meta->second});
    }
    return sessions;
}

}  // namespace tracena
