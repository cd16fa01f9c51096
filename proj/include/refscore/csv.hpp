#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace refscore::csv {

/// A parsed CSV file: the header row plus data rows of equal width.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column, or nullopt.
  [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const;
  /// Index of a named column; throws DataError naming `source` when absent.
  [[nodiscard]] std::size_t require_column(std::string_view name, std::string_view source) const;
};

/// RFC 4180 parsing (quoted fields, doubled quotes, CRLF tolerated). A leading UTF-8 BOM is skipped.
Table parse(std::string_view text, std::string_view source = "<memory>");
Table read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);
std::string format_table(const Table& table);

/// Shortest representation that round-trips through strtod.
std::string format_double(double x);
double parse_double(std::string_view s, std::string_view context);
long long parse_int(std::string_view s, std::string_view context);

/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace refscore::csv
