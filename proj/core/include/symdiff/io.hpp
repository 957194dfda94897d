#pragma once

#include "symdiff/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace symdiff {

/// Write via a temporary file in the same directory and rename over the
/// target, so readers never see partial output. Creates parent directories.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip representation ("%.17g"); "inf"/"-inf"/"nan" otherwise.
std::string format_double(double v);

/// Comma-separated rows, full precision.
std::string matrix_to_csv(const Matrix& m);

/// Parse "key = value" lines; '#' starts a comment, blank lines are skipped.
/// Throws ValidationError naming the line on malformed input or duplicates.
std::map<std::string, std::string> parse_flat_config(const std::string& text);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace symdiff
