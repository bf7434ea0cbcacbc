#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace trajcast::csv {

std::vector<std::string> split(std::string_view line, char sep = ',');
double to_double(std::string_view field, std::string_view context);
long to_long(std::string_view field, std::string_view context);

/// Shortest decimal representation that round-trips a double.
std::string format_double(double v);

/// Reads a CSV file, skipping `#` comment lines; checks that the header
/// matches `expected` and returns the remaining rows.
std::vector<std::vector<std::string>> read_table(std::istream& in, const std::vector<std::string>& expected,
                                                 std::string_view what);

}  // namespace trajcast::csv
