#pragma once

// Minimal comma-separated reader for the id/label tables used here: no
// quoting, one record per line, trailing CR tolerated.

#include <string>
#include <string_view>
#include <vector>

namespace gleason::csv {

std::vector<std::string> split_line(std::string_view line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row
};

// Throws InputError if the file cannot be opened or is empty.
Table read(const std::string& path);

// Column index in the header, or throws InputError naming the file.
std::size_t column(const Table& t, std::string_view name, const std::string& path);

}  // namespace gleason::csv
