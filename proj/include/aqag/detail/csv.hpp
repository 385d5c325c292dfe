#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "aqag/error.hpp"

namespace aqag::detail {

using CsvRow = std::vector<std::string>;

// RFC 4180 reader: comma separated, fields optionally double-quoted, quotes
// escaped by doubling, quoted fields may span lines. A UTF-8 BOM is skipped.
// Rows are returned with the header as element 0. Errors carry the 1-based
// physical record number (header = 0).
inline std::vector<CsvRow> parse_csv(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false;       // inside a quoted section
  bool field_started = false;
  bool after_quote = false;  // closing quote seen, expecting separator

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
    after_quote = false;
  };
  auto end_row = [&] {
    end_field();
    // A line with a single empty field is a blank line; skip it.
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (after_quote) {
      throw FormatError("unexpected character after closing quote", rows.size());
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted field", rows.size());
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos ||
                            (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format_csv_row(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line.push_back(',');
    line += csv_escape(fields[i]);
  }
  line.push_back('\n');
  return line;
}

}  // namespace aqag::detail
