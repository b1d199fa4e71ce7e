#pragma once

#include <string>
#include <string_view>

namespace cfbench {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Hash of a file's full contents.
std::string sha256_file(const std::string& path);

}  // namespace cfbench
