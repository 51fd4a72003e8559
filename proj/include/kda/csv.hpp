#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kda {

/// Shortest decimal text that round-trips to the same double.
std::string format_real(double value);
std::optional<double> parse_real(std::string_view text);

/// RFC 4180-style table: quoted fields may contain commas, quotes, newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  /// Throws input error naming the missing column.
  std::size_t require_column(std::string_view name) const;

  std::string to_string() const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::string& path);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
std::string csv_field(std::string_view field);

}  // namespace kda
