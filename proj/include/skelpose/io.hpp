#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace skelpose {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace skelpose
