#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lbd {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict parse of a full token; throws std::invalid_argument on failure.
double parse_double(std::string_view token);
long long parse_integer(std::string_view token);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// Reads a whole file, throwing InputError if it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

/// Non-fatal diagnostics go to stderr unless silenced.
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);

}  // namespace lbd
