#pragma once

// Binary tensor checkpoints, little-endian:
//   "BDIF" | version u32 | count u32 |
//   count x ( name_len u16 | name bytes | rank u8 | dims u32 x rank | f64 data )

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "buildiff/autodiff.hpp"

namespace buildiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Convenience wrappers for whole parameter sets.
std::vector<NamedTensor> snapshot(const ad::ParameterSet& params);
// Copies matching entries into params; every parameter must be present with
// an identical shape.
void restore(ad::ParameterSet& params, const std::vector<NamedTensor>& entries);

}  // namespace buildiff
