#pragma once

#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "carcensus/util.hpp"

namespace carcensus {

// Minimal CSV support for the pipeline's file formats: comma-delimited,
// UTF-8, first row is the header, '\n' line endings (a trailing '\r' is
// tolerated). No quoting; none of the formats need embedded commas.

struct CsvRow {
  size_t line_no = 0;  // 1-based, header is line 1
  std::vector<std::string> fields;
};

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& expected_header) {
  const std::string text = read_text_file(path);
  CsvTable table;
  table.path = path.string();

  size_t line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    if (start == text.size()) break;
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line_no == 1) {
      table.header = split(line, ',');
      if (!expected_header.empty() && table.header != expected_header) {
        std::ostringstream msg;
        msg << table.path << ":1: unexpected header; expected \"";
        for (size_t i = 0; i < expected_header.size(); ++i) {
          if (i) msg << ',';
          msg << expected_header[i];
        }
        msg << "\" but found \"" << std::string(line) << "\"";
        throw ParseError(msg.str());
      }
    } else if (!line.empty()) {
      CsvRow row;
      row.line_no = line_no;
      row.fields = split(line, ',');
      if (row.fields.size() != table.header.size()) {
        std::ostringstream msg;
        msg << table.path << ":" << line_no << ": expected " << table.header.size()
            << " fields, found " << row.fields.size();
        throw ParseError(msg.str());
      }
      table.rows.push_back(std::move(row));
    }
    start = end + 1;
  }
  if (line_no == 0) throw ParseError(table.path + ": empty file (missing header)");
  return table;
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

// Context-carrying error helper for row-level validation.
inline ParseError row_error(const CsvTable& table, const CsvRow& row, const std::string& message) {
  std::ostringstream msg;
  msg << table.path << ":" << row.line_no << ": " << message;
  return ParseError(msg.str());
}

}  // namespace carcensus
