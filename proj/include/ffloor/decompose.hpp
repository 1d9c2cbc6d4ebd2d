#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ffloor/forest.hpp"

namespace ffloor {

// One step along a row's path through a tree. `feature` is the contribution
// column the step is booked to: 0 for the bootstrap step from the base rate
// to the root, l = j + 1 when the parent node split on dataset column j.
struct Increment {
  int feature = 0;
  std::vector<double> delta;
};

struct IncrementTrace {
  std::size_t row = 0;
  std::size_t tree = 0;
  std::vector<Increment> steps;
  std::size_t leaf = 0;
};

enum class Variant { plain, oob };

const char* to_string(Variant v);

// N x (d + 1) x c feature contributions. Column 0 is the bootstrap term.
// For the oob variant rows that were never out-of-bag are undefined and
// hold NaN.
struct ContributionMatrix {
  Variant variant = Variant::plain;
  std::size_t n_rows = 0;
  std::size_t n_features = 0;  // d, excluding the bootstrap column
  int n_outputs = 1;
  std::vector<double> values;
  std::vector<std::uint32_t> tree_counts;  // n_tree (plain) or |OOB trees|
  std::vector<double> base_rate;

  std::size_t n_columns() const { return n_features + 1; }
  std::size_t index(std::size_t i, std::size_t l, int k) const {
    return (i * n_columns() + l) * static_cast<std::size_t>(n_outputs) +
           static_cast<std::size_t>(k);
  }
  double at(std::size_t i, std::size_t l, int k = 0) const {
    return values[index(i, l, k)];
  }
  double& at(std::size_t i, std::size_t l, int k = 0) {
    return values[index(i, l, k)];
  }
  // Contribution of dataset column j (0-based), i.e. column l = j + 1.
  double feature(std::size_t i, std::size_t j, int k = 0) const {
    return at(i, j + 1, k);
  }
  bool defined(std::size_t i) const { return tree_counts[i] > 0; }
  std::size_t n_undefined() const;
};

// Path of `row` through tree `tree_index` as local increments, starting with
// the bootstrap increment root - base_rate.
IncrementTrace trace_row(const ForestModel& model, std::span<const double> row,
                         std::size_t tree_index);

// Plain contributions: increments summed by feature over all trees, divided
// by n_tree. Trees are accumulated in ascending order for every row.
ContributionMatrix feature_contributions(const ForestModel& model,
                                         const FeatureMatrix& rows,
                                         Exec exec = Exec::parallel);

// Out-of-bag contributions of the model's own training rows: only trees in
// which the row was out-of-bag are summed, divided by their count.
ContributionMatrix oob_feature_contributions(const ForestModel& model,
                                             const FeatureMatrix& train,
                                             Exec exec = Exec::parallel);

struct DecompositionReport {
  Variant variant = Variant::plain;
  double max_residual = 0.0;
  std::size_t rows_checked = 0;
  std::size_t rows_undefined = 0;
  bool pass = false;
  static constexpr double kTolerance = 1e-9;
};

// max |base_rate + sum_l F_il - prediction_i| over defined rows and outputs.
// `predictions_variant` states which variant `predictions` is; a
// mismatch with the matrix variant throws ConfigError.
DecompositionReport verify_decomposition(const ForestModel& model,
                                         const ContributionMatrix& contributions,
                                         const Predictions& predictions,
                                         Variant predictions_variant);

// Long-format CSV: row_id, feature ("bootstrap" for column 0), class label
// (or "value"), contribution. Undefined rows are written as "NA".
void write_contributions_csv(const ContributionMatrix& m, const Schema& schema,
                             const std::string& path);
std::string contributions_json(const ContributionMatrix& m, const Schema& schema);
void write_contributions_json(const ContributionMatrix& m, const Schema& schema,
                              const std::string& path);
ContributionMatrix read_contributions_json(const std::string& path);

// For a feature split, the in-bag-count-weighted sum of its increments over
// a group of rows, accumulated over all trees. Sums across groups vanish
// because every split conserves n_parent * prediction_parent.
struct GroupDisplacement {
  double value = 0.0;                // the column value defining the group
  std::size_t rows = 0;              // training rows in the group
  std::vector<double> weighted_sum;  // sum_j sum_{i in group} bag_ij * H_ijl
  double weight = 0.0;               // sum_j sum_{i in group} bag_ij
  std::vector<double> mean() const;
};

// Groups training rows by the distinct values of `column` (intended for
// binary and categorical columns), ascending by value.
std::vector<GroupDisplacement> inbag_group_displacement(
    const ForestModel& model, const FeatureMatrix& train, std::size_t column);

}  // namespace ffloor
