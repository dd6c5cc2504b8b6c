#include "gleason/csv.hpp"

#include <algorithm>
#include <fstream>

#include "gleason/errors.hpp"

namespace gleason::csv {

std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

Table read(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path);
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (t.header.empty()) {
      t.header = split_line(line);
      continue;
    }
    t.rows.push_back(split_line(line));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw InputError(path + " is empty");
  return t;
}

std::size_t column(const Table& t, std::string_view name, const std::string& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw InputError(path + ": missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace gleason::csv
