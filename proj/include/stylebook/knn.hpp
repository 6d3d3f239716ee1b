#pragma once

// kNN frame matching: every source frame is replaced by the mean of its k
// nearest target frames under cosine distance. The bank stores every target
// frame, so its memory grows linearly with target length.

#include "stylebook/autodiff.hpp"

#include <cstddef>

namespace stylebook {

struct TargetBank {
  Matrix frames;  // T_tgt x D
};

/// Cosine distance 1 - cos(a, b); zero vectors are treated as distance 1.
double cosine_distance(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b);

/// Ties in distance resolve to the lower bank index.
Matrix knn_match(const TargetBank& bank, const Matrix& source, int k);

std::size_t bank_memory_bytes(const TargetBank& bank);

}  // namespace stylebook
