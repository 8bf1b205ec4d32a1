#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowmatch/toydata.hpp"

namespace flowmatch {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Header x0,...,x{d-1}; one row per sample; LF line endings.
void write_points_csv(std::ostream& out, const Points<double>& points);
void write_points_csv(const std::filesystem::path& path, const Points<double>& points);

// Accepts the layout written by write_points_csv (a header row is skipped when
// its first field is not numeric).
SampleBatch read_points_csv(const std::filesystem::path& path);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace flowmatch
