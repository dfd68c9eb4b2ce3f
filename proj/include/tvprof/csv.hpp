#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tvprof::csv {

// Shortest round-trip decimal representation (via std::to_chars).
std::string format_double(double x);

std::vector<std::string_view> split(std::string_view line, char sep);

// Strict full-token parses; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long> parse_long(std::string_view s);

// Splits on '\n', dropping a trailing '\r' per line (tolerates CRLF input).
std::vector<std::string_view> lines(std::string_view text);

std::string read_file(const std::string& path);         // throws on failure
void write_file(const std::string& path, std::string_view content);

}  // namespace tvprof::csv
