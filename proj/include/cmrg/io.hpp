#pragma once

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cmrg/core.hpp"

namespace cmrg {

/// Input that could not be read or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Shortest-safe decimal form: 17 significant digits round-trip any double.
inline std::string formatReal(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

/// Headerless CSV, one matrix row per line.
inline void writeMatrixCsv(std::ostream& out, const Matrix& m) {
  std::string line;
  for (Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) line += ',';
      line += formatReal(m(i, j));
    }
    line += '\n';
    out << line;
  }
}

inline void writeMatrixCsv(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  writeMatrixCsv(out, m);
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace detail {

inline std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parseReal(const std::string& field, const std::string& where, std::size_t row,
                        std::size_t col) {
  const std::string t = trimmed(field);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw IoError(where + ": row " + std::to_string(row) + ", column " + std::to_string(col) +
                  ": '" + t + "' is not a number");
  }
  return v;
}

}  // namespace detail

/// Parses headerless CSV. Blank lines are skipped; every other line must
/// have the same number of numeric fields. Locations in errors are 1-based.
inline Matrix readMatrixCsv(std::istream& in, const std::string& where = "csv") {
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineNo = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineNo;
    if (detail::trimmed(line).empty()) continue;
    std::size_t count = 0, start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      values.push_back(detail::parseReal(field, where, lineNo, count + 1));
      ++count;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw IoError(where + ": row " + std::to_string(lineNo) + " has " + std::to_string(count) +
                    " fields, expected " + std::to_string(cols));
    }
    ++rows;
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(static_cast<Index>(i), static_cast<Index>(j)) = values[i * cols + j];
    }
  }
  return m;
}

inline Matrix readMatrixCsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return readMatrixCsv(in, path);
}

/// One group per line of whitespace-separated 1-based indices; blank lines
/// and text after '#' are ignored.
inline GroupSet readGroupFile(std::istream& in, Index dimension, const std::string& where = "groups") {
  std::vector<std::vector<Index>> groups;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::vector<Index> members;
    std::string tok;
    while (tokens >> tok) {
      long long v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 1) {
        throw IoError(where + ": line " + std::to_string(lineNo) + ": '" + tok +
                      "' is not a positive index");
      }
      members.push_back(static_cast<Index>(v - 1));
    }
    if (!members.empty()) groups.push_back(std::move(members));
  }
  try {
    return GroupSet(dimension, std::move(groups));
  } catch (const InvalidArgument& e) {
    throw IoError(where + ": " + e.what());
  }
}

inline GroupSet readGroupFile(const std::string& path, Index dimension) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return readGroupFile(in, dimension, path);
}

inline void writeGroupFile(std::ostream& out, const GroupSet& groups) {
  for (const auto& g : groups.groups()) {
    for (std::size_t k = 0; k < g.size(); ++k) out << (k ? " " : "") << g[k] + 1;
    out << '\n';
  }
}

inline void writeGroupFile(const std::string& path, const GroupSet& groups) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  writeGroupFile(out, groups);
}

}  // namespace cmrg
