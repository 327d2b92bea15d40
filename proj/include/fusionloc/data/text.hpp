#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fusionloc::data {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Parses a whole token as a double; throws FormatError mentioning `context`.
double parse_double(std::string_view token, std::string_view context);
long long parse_int(std::string_view token, std::string_view context);

/// Whitespace-separated tokens of a line.
std::vector<std::string_view> split_ws(std::string_view line);

/// Reads a text file into lines; throws IoError when it cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory, then renames.
/// Throws IoError with the path.
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace fusionloc::data
