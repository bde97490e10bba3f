#pragma once

#include <iosfwd>
#include <string>

#include "cfa/datagen.hpp"

namespace cfa {

// Comma-separated, header row of variable names, one row per observation.
// Ordinal codes are written as plain integers; continuous values use the
// shortest digit string that round-trips, so output is byte-stable.
void write_dataset_csv(const Dataset& data, std::ostream& out);

// Reads a dataset written by write_dataset_csv (or any numeric CSV with a
// header). All columns come back as continuous; use Dataset::apply_kinds to
// mark ordinal variables from a model spec. Throws std::runtime_error with
// a line number on malformed input.
Dataset read_dataset_csv(std::istream& in);

// File conveniences; throw std::runtime_error when the path cannot be opened.
void write_dataset_csv_file(const Dataset& data, const std::string& path);
Dataset read_dataset_csv_file(const std::string& path);

// Shortest round-trip decimal representation of v.
std::string format_double(double v);

}  // namespace cfa
