// SPDX-License-Identifier: Apache-2.0
#include "btrnn/csv.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "btrnn/errors.hpp"

namespace btrnn {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s) {
  // strtod rather than stod: subnormals set ERANGE but are exact values.
  const auto bad = [&] { return std::invalid_argument("not a real number: '" + s + "'"); };
  if (s.empty() || std::isspace(static_cast<unsigned char>(s.front()))) throw bad();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw bad();
  if (errno == ERANGE && std::isinf(v)) throw bad();
  return v;
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw DimensionMismatch("csv row has " + std::to_string(row.size()) + " fields, header has " +
                            std::to_string(header.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw std::out_of_range("csv has no column '" + name + "'");
}

namespace {

void append_field(std::string& out, const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) {
    out += field;
    return;
  }
  out += '"';
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void append_line(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t c = 0; c < fields.size(); ++c) {
    if (c) out += ',';
    append_field(out, fields[c]);
  }
  out += '\n';
}

}  // namespace

std::string CsvTable::to_string() const {
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw DimensionMismatch("csv rows are not homogeneous");
  }
  std::string out;
  append_line(out, header);
  for (const auto& row : rows) append_line(out, row);
  return out;
}

CsvTable CsvTable::parse(const std::string& text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t p = 0; p < text.size(); ++p) {
    const char c = text[p];
    if (quoted) {
      if (c == '"') {
        if (p + 1 < text.size() && text[p + 1] == '"') {
          field += '"';
          ++p;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(fields));
      fields.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw std::invalid_argument("csv: unterminated quoted field");
  if (any) {
    fields.push_back(std::move(field));
    lines.push_back(std::move(fields));
  }
  if (lines.empty()) throw std::invalid_argument("csv: missing header");
  CsvTable t;
  t.header = std::move(lines.front());
  for (std::size_t r = 1; r < lines.size(); ++r) t.add_row(std::move(lines[r]));
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_csv(const CsvTable& table, const std::filesystem::path& path) { write_text(path, table.to_string()); }

CsvTable read_csv(const std::filesystem::path& path) { return CsvTable::parse(read_text(path)); }

template <typename T>
std::string grid_to_string(const Tensor<T>& matrix) {
  if (matrix.order() != 2) throw DimensionMismatch("grid output needs a matrix");
  const auto rows = matrix.shape()[0], cols = matrix.shape()[1];
  std::string out = "# btrnn-grid 1\n" + std::to_string(rows) + " " + std::to_string(cols) + "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ' ';
      out += format_real(static_cast<double>(matrix[r * cols + c]));
    }
    out += '\n';
  }
  return out;
}

Tensor<double> grid_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  std::getline(in, magic);
  if (magic != "# btrnn-grid 1") throw std::invalid_argument("grid: bad header line");
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows == 0 || cols == 0) throw std::invalid_argument("grid: bad dimensions");
  std::vector<double> data;
  data.reserve(rows * cols);
  std::string token;
  while (in >> token) data.push_back(parse_real(token));
  if (data.size() != rows * cols) throw ShapeMismatch("grid: value count does not match dimensions");
  return Tensor<double>({rows, cols}, std::move(data));
}

template <typename T>
void write_grid(const Tensor<T>& matrix, const std::filesystem::path& path) {
  write_text(path, grid_to_string(matrix));
}

Tensor<double> read_grid(const std::filesystem::path& path) { return grid_from_string(read_text(path)); }

template std::string grid_to_string(const Tensor<float>&);
template std::string grid_to_string(const Tensor<double>&);
template void write_grid(const Tensor<float>&, const std::filesystem::path&);
template void write_grid(const Tensor<double>&, const std::filesystem::path&);

}  // namespace btrnn
