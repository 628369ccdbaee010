#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nsvm::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumeric = 3 };

/// Runs one command line (without the program name) and returns its exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// crc32 of a file's bytes as eight lowercase hex digits.
std::string file_crc32(const std::filesystem::path& path);

}  // namespace nsvm::cli
