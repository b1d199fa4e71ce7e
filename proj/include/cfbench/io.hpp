#pragma once

#include "cfbench/core.hpp"

#include <string>
#include <vector>

namespace cfbench {

/// Image blob: "CFBIMG01" | u64 LE count | count * 784 float64 LE (row-major).
void write_images(const std::string& path, const std::vector<Image>& images);
std::vector<Image> read_images(const std::string& path);

/// Writes through a temporary file and renames, so readers never observe a
/// partially written artifact.
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace cfbench
