#pragma once

// CSV tables with a header row of column names and a first column of row IDs.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mbias/errors.hpp"

namespace mbias::io {

struct Table {
  std::vector<std::string> row_names;
  std::vector<std::string> col_names;
  Eigen::MatrixXd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one line on commas; fields may be double-quoted with "" escapes.
inline std::vector<std::string> split_csv(std::string_view line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!trim(cur).empty()) throw ValidationError(where + ": stray quote");
      cur.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError(where + ": unterminated quote");
  out.push_back(was_quoted ? cur : std::string(trim(cur)));
  return out;
}

inline double parse_number(const std::string& field, const std::string& where) {
  const char* first = field.data();
  const char* last = first + field.size();
  if (first != last && *first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw ValidationError(where + ": '" + field + "' is not a number");
  }
  if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value '" + field + "'");
  return v;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos && s == std::string(trim(s))) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Parses CSV text. `source` names the input in error messages; line numbers
/// are 1-based and count the header.
inline Table parse_csv(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto fields = detail::split_csv(line, where);
    if (!have_header) {
      if (fields.size() < 2) throw ValidationError(where + ": header needs an ID column and at least one data column");
      t.col_names.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != t.col_names.size() + 1) {
      throw ValidationError(where + ": row has " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(t.col_names.size() + 1));
    }
    t.row_names.push_back(fields[0]);
    std::vector<double> vals;
    vals.reserve(fields.size() - 1);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      vals.push_back(detail::parse_number(fields[c], where + " column " + std::to_string(c + 1)));
    }
    rows.push_back(std::move(vals));
  }
  if (!have_header) throw ValidationError(source + ": empty table");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.col_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const Table& t, const std::string& id_header = "id") {
  if (static_cast<Eigen::Index>(t.row_names.size()) != t.rows() ||
      static_cast<Eigen::Index>(t.col_names.size()) != t.cols()) {
    throw ShapeError("write_csv: names do not match table shape");
  }
  out << detail::quote_if_needed(id_header);
  for (const auto& c : t.col_names) out << ',' << detail::quote_if_needed(c);
  out << '\n';
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    out << detail::quote_if_needed(t.row_names[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < t.cols(); ++c) out << ',' << format_double(t.values(r, c));
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Table& t, const std::string& id_header = "id") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  write_csv(out, t, id_header);
  if (!out) throw ValidationError("write to '" + path + "' failed");
}

}  // namespace mbias::io
