#pragma once

// Small file helpers shared by the dataset, checkpoint and CLI code.

#include <filesystem>
#include <string>
#include <vector>

#include "moce/scalar.hpp"

namespace moce::io {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see a
/// partial file.
void write_text(const std::filesystem::path& path, const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-separated, first line is the header; no quoting.
CsvTable read_csv(const std::filesystem::path& path);

/// Parses every cell of a CSV as a double. Throws InputError on
/// ragged rows or non-numeric cells.
Mat<double> read_numeric_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

std::string numeric_csv(const Mat<double>& m, const std::vector<std::string>& header);

double parse_double(const std::string& cell, const std::string& where);
long long parse_int(const std::string& cell, const std::string& where);

}  // namespace moce::io
