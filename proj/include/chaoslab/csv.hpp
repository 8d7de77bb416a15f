#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace chaoslab::csv {

/// Decimal with 17 significant digits (round-trips exactly).
std::string format_double(double value);

/// Appends `value` formatted by format_double.
void append_double(std::string& line, double value);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws FormatError if absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line, char sep = ',');

/// Reads a comma-separated file with a header line. Blank lines are skipped.
/// Throws FormatError on ragged rows (reporting the 1-based line number).
Table read_table(const std::string& path);

/// Parses a full-field double; throws FormatError naming `where` on failure.
double parse_double(std::string_view field, const std::string& where);

}  // namespace chaoslab::csv
