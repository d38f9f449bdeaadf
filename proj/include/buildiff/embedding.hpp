#pragma once

#include <cstddef>
#include <vector>

namespace buildiff {

// Image embedding fed to the denoiser. A dropped embedding carries no values;
// the denoiser substitutes its learned null embedding.
struct ConditionEmbedding {
  std::vector<double> values;
  bool dropped = false;

  static ConditionEmbedding dropped_condition() { return {{}, true}; }
  std::size_t dim() const { return values.size(); }
};

}  // namespace buildiff
