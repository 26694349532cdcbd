#pragma once

#include <filesystem>
#include <string>

namespace affseg {

// Lower-case hex SHA-256 of a file's bytes; matches `sha256sum`.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace affseg
