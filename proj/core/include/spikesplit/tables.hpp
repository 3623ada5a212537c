#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace spikesplit {

/// Tab-separated table with a header row. Lines starting with '#' and blank
/// lines are skipped on input.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws std::invalid_argument when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  void add_row(std::vector<std::string> row);
};

Table parse_tsv(std::string_view text);
std::string format_tsv(const Table& table);
void write_tsv(std::ostream& os, const Table& table);

/// Right-aligned fixed-width rendering for terminals.
std::string format_aligned(const Table& table);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Strict numeric parsing: the whole field must be consumed.
double parse_double(std::string_view field);
std::uint64_t parse_uint(std::string_view field);

/// Fixed-point text with `decimals` digits ("inf" for infinities).
std::string format_fixed(double value, int decimals);
/// Shortest text that parses back to the same double ("inf" for infinities).
std::string format_exact(double value);
/// Integer with thousands separators, as printed in the byte-count tables.
std::string format_grouped(std::uint64_t value);

}  // namespace spikesplit
