#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace t2v {

// Writes to a sibling temporary file, then renames over the destination.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace t2v
