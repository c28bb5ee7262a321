// SPDX-License-Identifier: Apache-2.0
#include "psap/csv.hpp"

#include <charconv>
#include <ostream>
#include <sstream>

#include "psap/errors.hpp"

namespace psap {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("CSV column '" + std::string(name) + "' missing");
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(fields[i]);
    }
    out << "\r\n";
  };
  line(table.header);
  for (const auto& r : table.rows) {
    if (r.size() != table.header.size()) {
      throw ContractError("CSV row has " + std::to_string(r.size()) + " fields, header has " +
                          std::to_string(table.header.size()));
    }
    line(r);
  }
}

std::string to_csv(const CsvTable& table) {
  std::ostringstream s;
  write_csv(s, table);
  return s.str();
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        if (i < text.size() && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
          throw FormatError("CSV: unexpected character after closing quote at byte " +
                            std::to_string(i));
        }
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"') {
      if (field_started || !field.empty()) {
        throw FormatError("CSV: quote inside unquoted field at byte " + std::to_string(i));
      }
      quoted = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' || c == '\n') {
      end_record();
      i += (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ? 2 : 1;
    } else {
      field += c;
      field_started = true;
      ++i;
    }
  }
  if (quoted) throw FormatError("CSV: unterminated quoted field");
  if (field_started || !record.empty()) end_record();

  CsvTable t;
  if (records.empty()) throw FormatError("CSV: missing header");
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw FormatError("CSV: row " + std::to_string(r) + " has " +
                        std::to_string(records[r].size()) + " fields, header has " +
                        std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace psap
