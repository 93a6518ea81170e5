#pragma once

// CSV output. Every file starts with a "# <schema> v<version>" comment line
// followed by a header row. Numbers are printed with round-trip precision.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uavnet/error.hpp"

namespace uavnet {

inline constexpr int kCsvSchemaVersion = 1;

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(unsigned v) { return std::to_string(v); }
inline std::string fmt(const std::string& s) { return s; }
inline std::string fmt(const char* s) { return s; }

template <class T>
std::string join(const std::vector<T>& xs, const char* sep = ";") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += fmt(xs[i]);
  }
  return out;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema, std::vector<std::string> header)
      : out_(path, std::ios::trunc), path_(path), columns_(header.size()) {
    require(out_.good(), "cannot open for writing: " + path);
    out_ << "# " << schema << " v" << kCsvSchemaVersion << '\n';
    write_line(header);
  }

  template <class... Ts>
  void row(const Ts&... fields) {
    write_line({fmt(fields)...});
  }

  void row_strings(const std::vector<std::string>& fields) { write_line(fields); }

  void flush() {
    out_.flush();
    require(out_.good(), "write failed: " + path_);
  }

 private:
  void write_line(const std::vector<std::string>& fields) {
    require(fields.size() == columns_, "csv: row width does not match header in " + path_);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::string path_;
  std::size_t columns_;
};

struct CsvTable {
  std::string schema_line;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("csv: no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open: " + path);
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.starts_with("# "),
          "csv: missing schema line in " + path);
  t.schema_line = line;
  require(static_cast<bool>(std::getline(in, line)), "csv: missing header in " + path);
  t.header = split_csv_line(line);
  while (std::getline(in, line)) t.rows.push_back(split_csv_line(line));
  return t;
}

}  // namespace uavnet
