#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sbgnn::io {

// Shortest decimal form that round-trips a double exactly ("%.17g").
std::string format_double(double v);

// Strict double parse of a whole token; `where` names the location in errors.
double parse_double(std::string_view token, const std::string& where);

long parse_long(std::string_view token, const std::string& where);

std::vector<std::string> split(std::string_view line, char sep);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Non-empty lines of a text file, with trailing '\r' stripped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Rectangular CSV of doubles, no header. Ragged rows raise FormatError with
// the offending row; unparsable cells raise ParseError with row and column.
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path,
                      const Eigen::MatrixXd& m);

}  // namespace sbgnn::io
