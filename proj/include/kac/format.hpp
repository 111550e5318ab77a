#pragma once

#include <string>
#include <string_view>

namespace kac {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// Strict parse of a full decimal token; throws std::invalid_argument.
double parse_double(std::string_view text);

}  // namespace kac
