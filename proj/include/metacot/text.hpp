#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the parsers. ASCII-only case folding.
namespace metacot::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);

/// Splits on `sep`, trimming every piece. Empty input yields no pieces.
std::vector<std::string> split_trimmed(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Collapses runs of whitespace into single spaces and trims.
std::string normalize_space(std::string_view s);

/// Strict full-string number parse (locale independent).
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Formats a double with the shortest representation that round-trips.
std::string format_double(double v);

}  // namespace metacot::text
