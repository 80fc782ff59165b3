#pragma once

#include <string>
#include <string_view>

namespace medqc::io {

std::string read_file(const std::string& path);  // throws InputError
void write_file(const std::string& path, std::string_view contents);

// Formats a double so that it parses back to the identical value.
std::string format_double(double value);

}  // namespace medqc::io
