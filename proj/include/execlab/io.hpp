#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace execlab::io {

/// Shortest decimal text that parses back to exactly `v`.
std::string fmt(double v);
std::string fmt(std::int64_t v);
inline std::string fmt(int v) { return fmt(static_cast<std::int64_t>(v)); }

/// Strict parse of a whole field; throws DataError naming `what` on failure.
double parse_double(std::string_view field, std::string_view what);
std::int64_t parse_int(std::string_view field, std::string_view what);

std::vector<std::string> split_csv(std::string_view line);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  ///< 1-based source line of each row

  /// Column index by name; throws DataError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Reads a headed CSV. Blank lines are skipped; rows keep their raw fields.
CsvTable read_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
/// Writes `text` to `path` (parent directories created).
void write_text(const std::filesystem::path& path, const std::string& text);

/// Joins fields with commas and a trailing newline.
std::string csv_row(const std::vector<std::string>& fields);

}  // namespace execlab::io
