#include "tvprof/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

#include "tvprof/csv.hpp"

namespace tvprof {

namespace {

// days-from-civil (Howard Hinnant's algorithm), days since 1970-01-01
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

void pad(std::string& out, int value, int width) {
  std::string s = std::to_string(value);
  out.append(static_cast<std::size_t>(width) - s.size(), '0');
  out += s;
}

}  // namespace

std::int64_t Timestamp::epoch_seconds() const {
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 +
         second;
}

std::string Timestamp::to_iso8601() const {
  std::string out;
  out.reserve(20);
  pad(out, year, 4);
  out += '-';
  pad(out, month, 2);
  out += '-';
  pad(out, day, 2);
  out += 'T';
  pad(out, hour, 2);
  out += ':';
  pad(out, minute, 2);
  out += ':';
  pad(out, second, 2);
  out += 'Z';
  return out;
}

int days_in_month(int year, int month) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2) {
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[month - 1];
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  // YYYY-MM-DDTHH:MM[:SS] followed by Z or +00:00
  if (s.size() < 17) return std::nullopt;
  std::string_view zone;
  if (s.back() == 'Z') {
    zone = s.substr(s.size() - 1);
    s.remove_suffix(1);
  } else if (s.size() > 6 && s.substr(s.size() - 6) == "+00:00") {
    zone = s.substr(s.size() - 6);
    s.remove_suffix(6);
  } else {
    return std::nullopt;
  }
  (void)zone;
  if (s.size() != 16 && s.size() != 19) return std::nullopt;
  if (s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':') return std::nullopt;
  if (s.size() == 19 && s[16] != ':') return std::nullopt;

  Timestamp t;
  const auto y = s.substr(0, 4), mo = s.substr(5, 2), d = s.substr(8, 2);
  const auto h = s.substr(11, 2), mi = s.substr(14, 2);
  if (!all_digits(y) || !all_digits(mo) || !all_digits(d) || !all_digits(h) ||
      !all_digits(mi))
    return std::nullopt;
  t.year = to_int(y);
  t.month = to_int(mo);
  t.day = to_int(d);
  t.hour = to_int(h);
  t.minute = to_int(mi);
  if (s.size() == 19) {
    const auto sec = s.substr(17, 2);
    if (!all_digits(sec)) return std::nullopt;
    t.second = to_int(sec);
  }
  if (t.month < 1 || t.month > 12) return std::nullopt;
  if (t.day < 1 || t.day > days_in_month(t.year, t.month)) return std::nullopt;
  if (t.hour > 23 || t.minute > 59 || t.second > 59) return std::nullopt;
  return t;
}

std::string YearMonth::to_string() const {
  std::string out;
  pad(out, year, 4);
  out += '-';
  pad(out, month, 2);
  return out;
}

std::optional<YearMonth> parse_year_month(std::string_view s) {
  if (s.size() != 7 || s[4] != '-') return std::nullopt;
  if (!all_digits(s.substr(0, 4)) || !all_digits(s.substr(5, 2))) return std::nullopt;
  YearMonth ym{to_int(s.substr(0, 4)), to_int(s.substr(5, 2))};
  if (ym.month < 1 || ym.month > 12) return std::nullopt;
  return ym;
}

namespace {

std::optional<std::string> parse_row(std::string_view line, SessionRecord& rec) {
  const auto fields = csv::split(line, ',');
  if (fields.size() != 5) return "expected 5 fields, got " + std::to_string(fields.size());
  if (fields[0].empty()) return std::string("empty household_id");
  rec.household_id = std::string(fields[0]);

  const auto ts = parse_timestamp(fields[1]);
  if (!ts) return std::string("invalid timestamp (UTC ISO-8601 required)");
  rec.start_time = *ts;

  rec.channel_sequence.clear();
  if (fields[2].empty()) return std::string("empty channel sequence");
  for (auto part : csv::split(fields[2], '|')) {
    if (part.empty()) return std::string("empty channel id in sequence");
    rec.channel_sequence.emplace_back(part);
  }

  rec.program_watches.clear();
  if (!fields[3].empty()) {
    for (auto part : csv::split(fields[3], ';')) {
      const std::size_t colon = part.rfind(':');
      if (colon == std::string_view::npos || colon == 0)
        return std::string("malformed program watch entry");
      const auto ratio = csv::parse_double(part.substr(colon + 1));
      if (!ratio) return std::string("malformed program ratio");
      if (*ratio < 0.0 || *ratio > 1.0) return std::string("program ratio outside [0,1]");
      rec.program_watches.push_back({std::string(part.substr(0, colon)), *ratio});
    }
  }

  const auto dur = csv::parse_double(fields[4]);
  if (!dur) return std::string("malformed duration");
  if (*dur < 0.0) return std::string("negative duration");
  if (!std::isfinite(*dur)) return std::string("non-finite duration");
  rec.duration_seconds = *dur;
  return std::nullopt;
}

}  // namespace

ParseResult parse_sessions(std::string_view csv_text) {
  const auto all_lines = csv::lines(csv_text);
  if (all_lines.empty() || all_lines[0] != kSessionCsvHeader)
    throw std::runtime_error("session log: missing or malformed header");

  ParseResult result;
  for (std::size_t i = 1; i < all_lines.size(); ++i) {
    const auto line = all_lines[i];
    if (line.empty()) continue;
    SessionRecord rec;
    if (auto err = parse_row(line, rec)) {
      result.rejections.push_back({static_cast<long>(i + 1), std::move(*err)});
    } else {
      result.sessions.push_back(std::move(rec));
    }
  }
  return result;
}

ParseResult parse_sessions_file(const std::string& path) {
  return parse_sessions(csv::read_file(path));
}

std::string serialize_session(const SessionRecord& s) {
  std::string out = s.household_id;
  out += ',';
  out += s.start_time.to_iso8601();
  out += ',';
  for (std::size_t i = 0; i < s.channel_sequence.size(); ++i) {
    if (i) out += '|';
    out += s.channel_sequence[i];
  }
  out += ',';
  for (std::size_t i = 0; i < s.program_watches.size(); ++i) {
    if (i) out += ';';
    out += s.program_watches[i].program_id;
    out += ':';
    out += csv::format_double(s.program_watches[i].ratio);
  }
  out += ',';
  out += csv::format_double(s.duration_seconds);
  return out;
}

std::string rejections_to_csv(const std::vector<RowRejection>& rejections) {
  std::string out = "line,reason\n";
  for (const auto& r : rejections) {
    out += std::to_string(r.line);
    out += ',';
    out += r.reason;
    out += '\n';
  }
  return out;
}

std::vector<HouseholdMonth> group_by_household_month(
    const std::vector<SessionRecord>& sessions) {
  std::map<std::pair<std::string, YearMonth>, std::vector<SessionRecord>> groups;
  for (const auto& s : sessions) groups[{s.household_id, s.year_month()}].push_back(s);

  std::vector<HouseholdMonth> out;
  out.reserve(groups.size());
  for (auto& [key, recs] : groups) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const SessionRecord& a, const SessionRecord& b) {
                       return a.start_time < b.start_time;
                     });
    out.push_back({key.first, key.second, std::move(recs)});
  }
  return out;
}

}  // namespace tvprof
