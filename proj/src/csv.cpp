#include "flowmatch/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flowmatch/errors.hpp"

namespace flowmatch {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

void write_points_csv(std::ostream& out, const Points<double>& points) {
  for (Index j = 0; j < points.cols(); ++j) out << (j ? ",x" : "x") << j;
  out << '\n';
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index j = 0; j < points.cols(); ++j) {
      if (j) out << ',';
      out << format_double(points(i, j));
    }
    out << '\n';
  }
}

void write_points_csv(const std::filesystem::path& path, const Points<double>& points) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_error(ErrorKind::kIo, "cannot write " + path.string());
  write_points_csv(out, points);
}

namespace {

bool parse_double(const std::string& field, double& value) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first < last && *first == ' ') ++first;
  const auto res = std::from_chars(first, last, value);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

SampleBatch read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(ErrorKind::kIo, "cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      if (!parse_double(field, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw_error(ErrorKind::kIo, path.string() + ": non-numeric field in '" + line + "'");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw_error(ErrorKind::kIo, path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw_error(ErrorKind::kIo, path.string() + ": no samples");
  SampleBatch batch;
  batch.points.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      batch.points(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return batch;
}

}  // namespace flowmatch
