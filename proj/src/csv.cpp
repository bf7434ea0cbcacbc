#include "trajcast/csv.hpp"

#include <charconv>
#include <istream>

#include "trajcast/error.hpp"

namespace trajcast::csv {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view field, std::string_view context) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError(std::string(context) + ": not a number: '" + std::string(field) + "'");
  return v;
}

long to_long(std::string_view field, std::string_view context) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError(std::string(context) + ": not an integer: '" + std::string(field) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::vector<std::string>> read_table(std::istream& in, const std::vector<std::string>& expected,
                                                 std::string_view what) {
  std::string line;
  bool have_header = false;
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    auto fields = split(line);
    if (!have_header) {
      if (fields != expected) {
        std::string want;
        for (const auto& f : expected) want += (want.empty() ? "" : ",") + f;
        throw DataError(std::string(what) + ": expected header '" + want + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != expected.size())
      throw DataError(std::string(what) + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(expected.size()));
    rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError(std::string(what) + ": missing header");
  return rows;
}

}  // namespace trajcast::csv
