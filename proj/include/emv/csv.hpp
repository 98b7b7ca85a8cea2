#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emv::csv {

/// A parsed comma-separated table. Rows keep their 1-based source line.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  /// Column position by header name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

Table read(std::istream& in);

std::vector<std::string> split_line(std::string_view line);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);
/// As above, throwing InputError("<what>: '<text>' is not a number").
double require_double(std::string_view text, const std::string& what);
int require_int(std::string_view text, const std::string& what);

/// Shortest representation that round-trips to the same double.
std::string format_double(double x);

} // namespace emv::csv
