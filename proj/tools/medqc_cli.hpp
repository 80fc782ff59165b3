#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace medqc::cli {

inline constexpr const char* kToolName = "medqc";
inline constexpr const char* kToolVersion = "1.0.0";

// Runs one command line (without the program name) and returns the process
// exit code: 0 success, 2 usage or input error, 3 empty result, 4 numeric
// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace medqc::cli
