#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cttvae/core.hpp"

namespace cttvae {

/// A string-celled table with a header row. Row-major.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t num_rows() const { return rows.size(); }
  std::size_t num_cols() const { return header.size(); }

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("column not found: " + name);
  }
  bool has_col(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }

  friend bool operator==(const Table&, const Table&) = default;
};

namespace detail {

inline bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  if (in_quotes) throw Error("csv: unterminated quoted field");
  fields.push_back(std::move(field));
  return true;
}

inline void write_field(std::ostream& out, const std::string& f) {
  if (f.find_first_of(",\"\n\r") == std::string::npos) {
    out << f;
    return;
  }
  out << '"';
  for (char c : f) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace detail

inline Table read_csv(std::istream& in) {
  Table t;
  std::vector<std::string> rec;
  if (!detail::read_record(in, rec)) throw Error("csv: empty input");
  if (!rec.empty() && rec[0].rfind("\xEF\xBB\xBF", 0) == 0) rec[0].erase(0, 3);
  t.header = rec;
  std::size_t line = 1;
  while (detail::read_record(in, rec)) {
    ++line;
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    if (rec.size() != t.header.size())
      throw Error("csv: line " + std::to_string(line) + " has " + std::to_string(rec.size()) +
                  " fields, expected " + std::to_string(t.header.size()));
    t.rows.push_back(rec);
  }
  return t;
}

inline Table read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const Table& t) {
  auto write_row = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << ',';
      detail::write_field(out, r[i]);
    }
    out << '\n';
  };
  write_row(t.header);
  for (const auto& r : t.rows) write_row(r);
}

inline std::string to_csv_string(const Table& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

inline void write_csv_file(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_csv(out, t);
}

}  // namespace cttvae
