#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cfvqa::io {

std::string read_file(const std::filesystem::path &path);

// Writes to a sibling temp file, then renames it over the target. Parent
// directories are created as needed.
void write_file_atomic(const std::filesystem::path &path, std::string_view content);

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view value);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path &path);

}  // namespace cfvqa::io
