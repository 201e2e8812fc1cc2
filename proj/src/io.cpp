#include "sbgnn/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sbgnn/errors.hpp"

namespace sbgnn::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view token, const std::string& where) {
  std::string_view t = trim(token);
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ParseError("cannot parse '" + std::string(token) + "' as a number at " + where);
  }
  return value;
}

long parse_long(std::string_view token, const std::string& where) {
  std::string_view t = trim(token);
  long value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ParseError("cannot parse '" + std::string(token) + "' as an integer at " + where);
  }
  return value;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.filename().string() + " not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < blob.size()) {
    std::size_t pos = blob.find('\n', start);
    if (pos == std::string::npos) pos = blob.size();
    std::string line = blob.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    start = pos + 1;
  }
  return lines;
}

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw FormatError("empty CSV file " + path.string());

  const Eigen::Index cols = static_cast<Eigen::Index>(split(lines[0], ',').size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(lines.size()), cols);
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const std::vector<std::string> cells = split(lines[r], ',');
    if (static_cast<Eigen::Index>(cells.size()) != cols) {
      throw FormatError("ragged CSV row " + std::to_string(r) + " in " + path.string() +
                        ": expected " + std::to_string(cols) + " cells, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(
          cells[c], path.filename().string() + " row " + std::to_string(r) + " col " + std::to_string(c));
    }
  }
  return m;
}

void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 12);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out.push_back(',');
      out += format_double(m(r, c));
    }
    out.push_back('\n');
  }
  write_file(path, out);
}

}  // namespace sbgnn::io
