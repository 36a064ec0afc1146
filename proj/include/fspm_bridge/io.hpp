#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace fspm_bridge {

/// Whole-file read/write in binary mode. Throw Error(io_error).
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace fspm_bridge
