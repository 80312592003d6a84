#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Minimal comma-separated I/O for the numeric tables this project writes.
// Fields never contain commas or quotes, so no quoting rules apply.
namespace nsatp::csv {

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

std::vector<std::string_view> split(std::string_view line);

/// Whole-cell parses; throw Error(NonNumericCell) on anything else.
double parse_double(std::string_view cell);
std::int64_t parse_int(std::string_view cell);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header; throws Error(Config) when absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a file whose first line is a header. Blank lines are skipped.
Table read_table(const std::filesystem::path& path);

}  // namespace nsatp::csv
