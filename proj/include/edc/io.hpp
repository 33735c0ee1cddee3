#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace edc {

/// Whole file as bytes. Throws IOError.
std::string read_file(const std::filesystem::path& path, const std::string& module = "io");

/// Writes to a sibling temporary and renames it over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

} // namespace edc
