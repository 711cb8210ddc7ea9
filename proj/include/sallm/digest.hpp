#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace sallm {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

// Digest over a directory tree: sorted relative paths plus file contents.
// Renaming, adding, or editing any file changes it; mtimes do not.
std::string sha256_tree(const std::filesystem::path& dir);

}  // namespace sallm
