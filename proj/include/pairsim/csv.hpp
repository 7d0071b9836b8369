#pragma once

#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "pairsim/errors.hpp"

namespace pairsim {

struct CsvRecord {
  std::size_t line = 0;  // 1-based line of the record's first character
  std::vector<std::string> fields;
};

// RFC-4180-style reader: quoted fields, doubled-quote escapes, embedded
// commas/newlines inside quotes, CRLF tolerated, optional UTF-8 BOM.
inline std::vector<CsvRecord> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (;; ++i) {
      if (i >= n) {
        rec.fields.push_back(field);
        break;
      }
      char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field.push_back('"');
            ++i;
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
        }
      } else if (c == '"' && field.empty() && !any) {
        in_quotes = true;
        any = true;
      } else if (c == ',') {
        rec.fields.push_back(field);
        field.clear();
        any = false;
      } else if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
        rec.fields.push_back(field);
        i += 2;
        ++line;
        break;
      } else if (c == '\n') {
        rec.fields.push_back(field);
        ++i;
        ++line;
        break;
      } else {
        field.push_back(c);
        any = true;
      }
    }
    if (in_quotes) throw DataError(path + ": line " + std::to_string(rec.line) + ": unterminated quote");
    // skip a completely empty trailing record (file ending in newline)
    if (rec.fields.size() == 1 && rec.fields[0].empty() && i >= n) break;
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::string csv_escape(const std::string& field) {
  bool needs = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_escape(fields[i]);
  }
  os << '\n';
}

}  // namespace pairsim
