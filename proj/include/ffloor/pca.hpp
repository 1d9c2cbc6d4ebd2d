#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ffloor/dataset.hpp"

namespace ffloor {

// Principal components of z-scored columns. Each component's sign is fixed
// so that its largest-magnitude loading is positive.
struct PcaResult {
  std::size_t n_rows = 0;
  std::size_t n_components = 0;
  std::vector<std::vector<double>> loadings;  // component x column
  std::vector<double> variances;              // eigenvalues, descending
  std::vector<double> explained;              // fraction of total variance
  std::vector<double> scores;                 // row-major n_rows x n_components
  bool rank_deficient = false;                // fewer non-zero components than asked

  double score(std::size_t i, std::size_t c) const {
    return scores[i * n_components + c];
  }
};

// PCA of the listed columns (all columns when empty), keeping up to
// `max_components`. Constant columns contribute zero after scaling.
PcaResult principal_components(const FeatureMatrix& features,
                               std::span<const int> columns = {},
                               std::size_t max_components = 2);

}  // namespace ffloor
