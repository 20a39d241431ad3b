#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tracena/codes.hpp"

// Canonical data types of the pipeline plus trace/metadata ingestion.
// Timestamps are integer milliseconds relative to the session start; the
// loader rebases whatever absolute clock the input file used, so downstream
// code only ever sees order and durations.

namespace tracena {

struct TraceEvent {
    std::int64_t timestamp_ms = 0;
    std::string user_id;
    std::string server_id;
    std::string event_kind;
    std::string target;                                          // may be empty
    std::vector<std::pair<std::string, std::string>> detail;     // ordered k=v payload

    bool operator==(const TraceEvent&) const = default;
};

enum class EducationLevel : std::uint8_t { SE, HE };

std::string_view to_string(EducationLevel level);
EducationLevel require_education_level(std::string_view token);

struct SessionMetadata {
    EducationLevel education_level = EducationLevel::SE;
    std::string school_id;                  // may be empty for HE
    double essay_score = 0.0;
    double pretest_score = 0.0;             // in [0, 15]
    std::optional<double> cet4_score;       // HE only
    double task_length_minutes = 0.0;

    bool operator==(const SessionMetadata&) const = default;
};

struct UnitId {
    std::string user_id;
    std::string server_id;

    auto operator<=>(const UnitId&) const = default;

    // "user/server" label used in scores.csv and reports.
    std::string label() const { return user_id + "/" + server_id; }
};

using MetadataTable = std::map<UnitId, SessionMetadata>;

struct Session {
    std::string user_id;
    std::string server_id;
    std::vector<TraceEvent> events;   // sorted by timestamp, non-empty
    SessionMetadata metadata;

    UnitId unit_id() const { return {user_id, server_id}; }
};

enum class TraceFormat { Delimited, Tree };

// Reads every record in file order. Malformed rows raise ParseError naming
// the row and field. When `rebase_timestamps` is set (the default), each
// (user_id, server_id) group is shifted so its earliest event sits at 0 ms.
std::vector<TraceEvent> load_trace(const std::filesystem::path& path,
                                   TraceFormat format = TraceFormat::Delimited,
                                   bool rebase_timestamps = true);

void write_trace(std::ostream& out, std::span<const TraceEvent> events,
                 TraceFormat format = TraceFormat::Delimited);
void write_trace(const std::filesystem::path& path, std::span<const TraceEvent> events,
                 TraceFormat format = TraceFormat::Delimited);

MetadataTable load_metadata(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path, const MetadataTable& table);

// Groups events into one Session per distinct (user_id, server_id), stably
// sorted by timestamp within a session; sessions ordered lexicographically.
// Every pair must have a metadata entry and `events` must be non-empty.
std::vector<Session> sessionize(std::vector<TraceEvent> events,
                                const MetadataTable& metadata);

std::string serialize_detail(const std::vector<std::pair<std::string, std::string>>& detail);
std::vector<std::pair<std::string, std::string>> parse_detail(std::string_view text);

}  // namespace tracena
