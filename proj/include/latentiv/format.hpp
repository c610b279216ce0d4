#pragma once

#include <string>
#include <string_view>

namespace latentiv {

// Shortest decimal form that parses back to the same double ("nan", "inf",
// "-inf" for non-finite values).
std::string format_double(double value);

// Fixed-point with `digits` decimals, for human-readable tables.
std::string format_fixed(double value, int digits);

// Strict parse of a whole field; nullopt-like failure signalled by false.
bool parse_double(std::string_view text, double& out);

}  // namespace latentiv
