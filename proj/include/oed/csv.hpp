#pragma once

#include <string>
#include <vector>

namespace oed::csv {

// Rows of numeric cells. Lines starting with '#' and a non-numeric first line
// (header) are skipped.
std::vector<std::vector<double>> read_numeric(const std::string& path);

// Shortest round-trip representation of a double ("%.17g").
std::string format(double v);

}  // namespace oed::csv
