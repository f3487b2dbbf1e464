// SPDX-License-Identifier: Apache-2.0
#pragma once

// CSV tables and plain-text numeric grids.
//
// Reals are written with printf "%.17g", which round-trips every double
// exactly (0.1 -> 0.10000000000000001). Fields containing a comma, quote or
// newline are quoted RFC 4180 style.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "btrnn/tensor.hpp"

namespace btrnn {

std::string format_real(double v);
double parse_real(const std::string& s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Appends a row; throws DimensionMismatch if its width differs from the header.
  void add_row(std::vector<std::string> row);

  std::size_t column(const std::string& name) const;
  std::string to_string() const;
  static CsvTable parse(const std::string& text);
};

/// Throws std::runtime_error on I/O failure.
void write_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);

// Grid format:
//   # btrnn-grid 1
//   <rows> <cols>
//   <cols reals>          one line per row, single-space separated
template <typename T>
std::string grid_to_string(const Tensor<T>& matrix);
Tensor<double> grid_from_string(const std::string& text);

template <typename T>
void write_grid(const Tensor<T>& matrix, const std::filesystem::path& path);
Tensor<double> read_grid(const std::filesystem::path& path);

/// Writes `text` to `path`, replacing any existing file.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace btrnn
