#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace metacot {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// "sha256:<hex>" of the file contents, or empty if the file is unreadable.
std::string file_digest(const std::filesystem::path& path);

std::string base64_encode(std::span<const unsigned char> bytes);

}  // namespace metacot
