#pragma once

#include "npresid/core.hpp"

#include <iosfwd>
#include <string>

namespace npresid {

/// "%.17g": enough digits for an exact double round trip.
std::string format_double(double v);

/// Reads a dataset with mandatory header x[,y],z1..zd (any column order).
/// Errors carry the 1-based line number and column name.
Dataset read_dataset_csv(std::istream& in, bool require_y = true);
Dataset read_dataset_csv_file(const std::string& path, bool require_y = true);

/// Writes columns x[,y],z1..zd.
void write_dataset_csv(std::ostream& out, const Dataset& dataset);

}  // namespace npresid
