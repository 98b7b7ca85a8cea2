#include "emv/csv.hpp"

#include "emv/error.hpp"

#include <array>
#include <charconv>
#include <limits>
#include <cmath>

namespace emv::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

} // namespace

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name)
      return i;
  return std::nullopt;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.emplace_back(trim(field));
  return out;
}

Table read(std::istream& in) {
  Table table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    if (trim(line).empty())
      continue;
    auto fields = split_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(lineno);
  }
  return table;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty())
    return std::nullopt;
  if (text.front() == '+')
    text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    return std::nullopt;
  return value;
}

std::optional<long long> parse_int(std::string_view text) {
  text = trim(text);
  if (text.empty())
    return std::nullopt;
  if (text.front() == '+')
    text.remove_prefix(1);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    return std::nullopt;
  return value;
}

std::string format_double(double x) {
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  (void)ec;
  return std::string(buf.data(), ptr);
}

double require_double(std::string_view text, const std::string& what) {
  auto v = parse_double(text);
  if (!v)
    throw InputError(what + ": '" + std::string(text) + "' is not a number");
  return *v;
}

int require_int(std::string_view text, const std::string& what) {
  auto v = parse_int(text);
  if (!v || *v < std::numeric_limits<int>::min() || *v > std::numeric_limits<int>::max())
    throw InputError(what + ": '" + std::string(text) + "' is not an integer");
  return static_cast<int>(*v);
}

} // namespace emv::csv
