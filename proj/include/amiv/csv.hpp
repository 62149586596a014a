#ifndef AMIV_CSV_HPP
#define AMIV_CSV_HPP

// Minimal comma-separated tables: no quoting, header row required.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace amiv {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws FormatError if absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Strict decimal parse; throws FormatError on trailing garbage.
double parse_double(std::string_view text);

/// printf %.{digits}g
std::string format_number(double value, int digits = 12);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace amiv

#endif  // AMIV_CSV_HPP
