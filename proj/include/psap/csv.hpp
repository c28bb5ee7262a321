// SPDX-License-Identifier: Apache-2.0
//
// RFC 4180 CSV tables.
#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace psap {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws FormatError if absent.
  std::size_t column(std::string_view name) const;
};

/// Quotes a field if it contains a comma, quote, CR or LF.
std::string csv_escape(std::string_view field);

/// CRLF line endings; every row must have header.size() fields.
void write_csv(std::ostream& out, const CsvTable& table);
std::string to_csv(const CsvTable& table);

/// Throws FormatError on malformed quoting or ragged rows.
CsvTable parse_csv(std::string_view text);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace psap
