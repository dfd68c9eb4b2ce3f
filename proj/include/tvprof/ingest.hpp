#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tvprof {

// UTC civil timestamp. Inputs must carry an explicit Z (or +00:00) suffix;
// no timezone inference is performed.
struct Timestamp {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;

  std::int64_t epoch_seconds() const;
  std::string to_iso8601() const;  // YYYY-MM-DDTHH:MM:SSZ

  auto operator<=>(const Timestamp&) const = default;
};

// Parses YYYY-MM-DDTHH:MM[:SS]Z or ...+00:00; nullopt on anything else.
std::optional<Timestamp> parse_timestamp(std::string_view s);

int days_in_month(int year, int month);

struct YearMonth {
  int year = 1970;
  int month = 1;

  std::string to_string() const;  // YYYY-MM
  // months since year 0, for contiguous panel indexing
  int index() const { return year * 12 + (month - 1); }

  auto operator<=>(const YearMonth&) const = default;
};

std::optional<YearMonth> parse_year_month(std::string_view s);

struct ProgramWatch {
  std::string program_id;
  double ratio = 0.0;  // fraction of the program watched, in [0,1]
};

struct SessionRecord {
  std::string household_id;
  Timestamp start_time;
  std::vector<std::string> channel_sequence;  // nonempty, opaque ids
  std::vector<ProgramWatch> program_watches;
  double duration_seconds = 0.0;  // >= 0

  YearMonth year_month() const { return {start_time.year, start_time.month}; }
};

struct RowRejection {
  long line = 0;  // 1-based line number in the input file
  std::string reason;
};

struct ParseResult {
  std::vector<SessionRecord> sessions;
  std::vector<RowRejection> rejections;
};

inline constexpr std::string_view kSessionCsvHeader =
    "household_id,start_time,channel_sequence,program_watches,duration_seconds";

// Parses the session-log CSV. Malformed rows are collected into the
// rejection report; valid rows are returned in file order.
// Throws std::runtime_error only on a structurally unreadable stream
// (missing or wrong header).
ParseResult parse_sessions(std::string_view csv_text);

ParseResult parse_sessions_file(const std::string& path);

// Canonical one-line CSV encoding of a record (no trailing newline).
std::string serialize_session(const SessionRecord& s);

std::string rejections_to_csv(const std::vector<RowRejection>& rejections);

struct HouseholdMonth {
  std::string household_id;
  YearMonth month;
  std::vector<SessionRecord> sessions;  // sorted by start_time
};

// Exhaustive, disjoint partition of the input by (household_id, month of
// start_time); groups ordered by (household_id, month), sessions within a
// group by start_time. Sessions crossing midnight into the next month stay
// with the month of their start_time.
std::vector<HouseholdMonth> group_by_household_month(
    const std::vector<SessionRecord>& sessions);

}  // namespace tvprof
