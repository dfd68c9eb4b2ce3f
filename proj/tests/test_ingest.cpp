#include <doctest.h>

#include <set>
#include <string>

#include "tvprof/ingest.hpp"
#include "tvprof/rng.hpp"

using namespace tvprof;

TEST_CASE("header-only file parses to empty list") {
  const auto res = parse_sessions("household_id,start_time,channel_sequence,"
                                  "program_watches,duration_seconds\n");
  CHECK(res.sessions.empty());
  CHECK(res.rejections.empty());
}

TEST_CASE("missing header is fatal") {
  CHECK_THROWS_AS(parse_sessions("a,b,c\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_sessions(""), std::runtime_error);
}

TEST_CASE("single row maps fields directly") {
  const std::string text =
      std::string(kSessionCsvHeader) +
      "\nhh1,2021-01-03T20:00Z,A|B|A,p1:0.5;p2:0.9,3600\n";
  const auto res = parse_sessions(text);
  REQUIRE(res.sessions.size() == 1);
  CHECK(res.rejections.empty());
  const auto& s = res.sessions[0];
  CHECK(s.household_id == "hh1");
  CHECK(s.start_time.year == 2021);
  CHECK(s.start_time.month == 1);
  CHECK(s.start_time.day == 3);
  CHECK(s.start_time.hour == 20);
  REQUIRE(s.channel_sequence.size() == 3);
  CHECK(s.channel_sequence[0] == "A");
  CHECK(s.channel_sequence[1] == "B");
  CHECK(s.channel_sequence[2] == "A");
  REQUIRE(s.program_watches.size() == 2);
  CHECK(s.program_watches[0].program_id == "p1");
  CHECK(s.program_watches[0].ratio == doctest::Approx(0.5));
  CHECK(s.program_watches[1].ratio == doctest::Approx(0.9));
  CHECK(s.duration_seconds == doctest::Approx(3600));
}

TEST_CASE("row-level validation failures are collected with line numbers") {
  const std::string text =
      std::string(kSessionCsvHeader) + "\n" +
      "hh1,2021-01-03T20:00:00Z,A,p1:0.5,-5\n" +       // negative duration
      "hh1,2021-01-03T20:00:00Z,A,p1:1.5,60\n" +       // ratio out of range
      "hh1,2021-01-03T20:00:00Z,,p1:0.5,60\n" +        // empty channels
      "hh1,2021-01-03 20:00:00,A,p1:0.5,60\n" +        // bad timestamp
      "hh1,2021-01-03T20:00:00Z,A,p1:0.5,60\n";        // valid
  const auto res = parse_sessions(text);
  CHECK(res.sessions.size() == 1);
  REQUIRE(res.rejections.size() == 4);
  CHECK(res.rejections[0].line == 2);
  CHECK(res.rejections[0].reason == "negative duration");
  CHECK(res.rejections[1].reason == "program ratio outside [0,1]");
  CHECK(res.rejections[2].reason == "empty channel sequence");
  CHECK(res.rejections[3].line == 5);
}

TEST_CASE("timestamps require an explicit UTC marker") {
  CHECK(parse_timestamp("2021-01-03T20:00Z").has_value());
  CHECK(parse_timestamp("2021-01-03T20:00:30Z").has_value());
  CHECK(parse_timestamp("2021-01-03T20:00:30+00:00").has_value());
  CHECK_FALSE(parse_timestamp("2021-01-03T20:00:30").has_value());
  CHECK_FALSE(parse_timestamp("2021-01-03T20:00:30+01:00").has_value());
  CHECK_FALSE(parse_timestamp("2021-02-30T10:00Z").has_value());
  CHECK_FALSE(parse_timestamp("garbage").has_value());
}

TEST_CASE("serialize round-trips canonical rows byte-identically") {
  RngStream rng(7);
  std::string text(kSessionCsvHeader);
  text += '\n';
  std::vector<std::string> expected;
  for (int i = 0; i < 200; ++i) {
    SessionRecord s;
    s.household_id = "hh" + std::to_string(1 + static_cast<int>(rng.uniform() * 5));
    s.start_time = {2021, 1 + static_cast<int>(rng.uniform() * 12),
                    1 + static_cast<int>(rng.uniform() * 28),
                    static_cast<int>(rng.uniform() * 24),
                    static_cast<int>(rng.uniform() * 60),
                    static_cast<int>(rng.uniform() * 60)};
    const int n_chan = 1 + static_cast<int>(rng.uniform() * 4);
    for (int c = 0; c < n_chan; ++c)
      s.channel_sequence.push_back(std::string(1, static_cast<char>('A' + c)));
    const int n_prog = static_cast<int>(rng.uniform() * 3);
    for (int p = 0; p < n_prog; ++p)
      s.program_watches.push_back({"p" + std::to_string(p), rng.uniform()});
    s.duration_seconds = rng.uniform() * 10000.0;
    const std::string line = serialize_session(s);
    expected.push_back(line);
    text += line;
    text += '\n';
  }
  const auto res = parse_sessions(text);
  CHECK(res.rejections.empty());
  REQUIRE(res.sessions.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(serialize_session(res.sessions[i]) == expected[i]);
}

TEST_CASE("grouping partitions sessions exhaustively and disjointly") {
  SUBCASE("no sessions") { CHECK(group_by_household_month({}).empty()); }

  SUBCASE("same household, different months") {
    std::vector<SessionRecord> sessions(2);
    sessions[0].household_id = "hh1";
    sessions[0].start_time = {2021, 1, 31, 23, 59, 0};
    sessions[0].channel_sequence = {"A"};
    sessions[0].duration_seconds = 7200;  // crosses midnight into February
    sessions[1].household_id = "hh1";
    sessions[1].start_time = {2021, 2, 1, 0, 30, 0};
    sessions[1].channel_sequence = {"A"};
    const auto groups = group_by_household_month(sessions);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].month == YearMonth{2021, 1});
    CHECK(groups[1].month == YearMonth{2021, 2});
  }

  SUBCASE("random partition property") {
    RngStream rng(11);
    std::vector<SessionRecord> sessions;
    for (int i = 0; i < 137; ++i) {
      SessionRecord s;
      s.household_id = "hh" + std::to_string(static_cast<int>(rng.uniform() * 4));
      s.start_time = {2021, 1 + static_cast<int>(rng.uniform() * 3),
                      1 + static_cast<int>(rng.uniform() * 28),
                      static_cast<int>(rng.uniform() * 24), 0, 0};
      s.channel_sequence = {"A"};
      sessions.push_back(s);
    }
    const auto groups = group_by_household_month(sessions);
    std::size_t total = 0;
    std::set<std::pair<std::string, YearMonth>> keys;
    for (const auto& g : groups) {
      total += g.sessions.size();
      CHECK(keys.insert({g.household_id, g.month}).second);
      for (std::size_t i = 0; i < g.sessions.size(); ++i) {
        CHECK(g.sessions[i].year_month() == g.month);
        CHECK(g.sessions[i].household_id == g.household_id);
        if (i > 0)
          CHECK_FALSE(g.sessions[i].start_time < g.sessions[i - 1].start_time);
      }
    }
    CHECK(total == sessions.size());
  }
}
