#pragma once

// Point cloud file formats.
//   .ply  ASCII PLY, one `vertex` element with float x y z
//   .bpc  "BPC1" | u32 count | count x (f32 x, f32 y, f32 z), little-endian
//   .xyz  plain text, one "x y z" line per point

#include <filesystem>

#include "buildiff/geometry.hpp"

namespace buildiff {

void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

void write_bpc(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_bpc(const std::filesystem::path& path);

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_xyz(const std::filesystem::path& path);

// Dispatch on the file extension.
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud(const std::filesystem::path& path);

}  // namespace buildiff
