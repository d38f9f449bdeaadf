#pragma once

#include <filesystem>

#include "buildiff/conditioner.hpp"

namespace buildiff {

// Binary 8-bit PGM (P5). Pixels are quantized to round(255 * p).
void write_pgm(const std::filesystem::path& path, const SilhouetteImage& image);
SilhouetteImage read_pgm(const std::filesystem::path& path);

}  // namespace buildiff
