#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ffloor/dataset.hpp"
#include "ffloor/parallel.hpp"
#include "ffloor/rng.hpp"

namespace ffloor {

// Training parameters. Zero-valued fields mean "use the task default" and are
// filled in by resolved().
struct TrainConfig {
  Task task = Task::regression;
  int n_tree = 500;
  int mtry = 0;                        // regression max(1, d/3), classif. sqrt(d)
  std::size_t sample_size = 0;         // N
  bool replace = true;
  std::vector<std::size_t> stratify;   // per-class bag counts; empty = off
  int min_node_size = 0;               // regression 5, classification 1
  std::uint64_t seed = 1;
  int max_categorical_levels = 16;

  // Fills defaults against `data` and validates every constraint. Throws
  // ConfigError on violation.
  TrainConfig resolved(const Dataset& data) const;

  bool operator==(const TrainConfig&) const = default;
};

// Numeric rules send x <= threshold left. Categorical rules send a level
// code c left iff bit (c - 1) of left_levels is set.
struct SplitRule {
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  std::uint32_t left_levels = 0;

  bool goes_left(double x) const {
    if (categorical)
      return (left_levels >> (static_cast<unsigned>(x) - 1U)) & 1U;
    return x <= threshold;
  }
  bool operator==(const SplitRule&) const = default;
};

struct TreeNode {
  int parent = -1;  // -1 marks the root
  std::optional<SplitRule> split;
  int left = -1;
  int right = -1;
  std::uint64_t in_bag_count = 0;

  bool is_leaf() const { return !split.has_value(); }
  bool operator==(const TreeNode&) const = default;
};

// A single tree as a flat node array (nodes[0] is the root). Every node,
// internal or terminal, keeps its in-bag prediction: the target mean for
// regression, the class-frequency vector for classification.
struct Tree {
  int n_outputs = 1;
  std::vector<TreeNode> nodes;
  std::vector<double> values;  // nodes.size() x n_outputs

  std::span<const double> prediction(std::size_t node) const {
    return {values.data() + node * static_cast<std::size_t>(n_outputs),
            static_cast<std::size_t>(n_outputs)};
  }
  std::size_t find_leaf(std::span<const double> x) const;
  bool operator==(const Tree&) const = default;
};

struct ForestModel {
  Schema schema;
  TrainConfig config;
  std::vector<double> base_rate;  // training mean or class proportions
  std::vector<Tree> trees;
  std::size_t n_train = 0;
  // Row-major n_train x n_tree bag counts: in_bag[i * n_tree + j].
  std::vector<std::uint32_t> in_bag;

  std::size_t n_tree() const { return trees.size(); }
  std::size_t n_features() const { return schema.n_features(); }
  int n_outputs() const { return schema.n_outputs(); }
  std::uint32_t bag_count(std::size_t row, std::size_t tree) const {
    return in_bag[row * trees.size() + tree];
  }
  bool operator==(const ForestModel&) const = default;
};

// 1 - sum_k (n_k / n)^2. Throws DegenerateError when all counts are zero.
double gini_impurity(std::span<const double> class_counts);

struct SplitCandidate {
  SplitRule rule;
  double loss = 0.0;  // SSE (regression) or size-weighted Gini
  std::uint64_t n_left = 0;
  std::uint64_t n_right = 0;
};

struct SplitSearch {
  std::optional<SplitCandidate> best;
  double parent_loss = 0.0;
  std::size_t candidates_evaluated = 0;
};

// Loss-minimizing split of the in-bag multiset `rows` (row indices with
// repetition) over `candidate_features`, in the given order. Numeric break
// points lie at midpoints of consecutive distinct values; categorical
// features enumerate all 2^(L-1)-1 partitions of the L levels present.
// Ties go to the earlier candidate feature, then the smaller break point
// (or smaller left mask). No split is returned when nothing separates the
// node or the best loss does not improve on the parent.
SplitSearch best_split(std::span<const std::size_t> rows,
                       std::span<const int> candidate_features,
                       const Dataset& data);

// Bag counts for one tree. `labels` is only consulted when stratifying.
std::vector<std::uint32_t> bootstrap_sample(std::size_t n_rows,
                                            std::span<const int> labels,
                                            const TrainConfig& config,
                                            SplitMix64& rng);

// Grows config.n_tree trees. Tree j draws from SplitMix64(stream_seed(seed,
// j)), so serial and parallel execution yield identical models.
ForestModel train_forest(const Dataset& data, const TrainConfig& config,
                         Exec exec = Exec::parallel);

// Row-wise ensemble output. Undefined rows (no contributing tree) hold NaN.
struct Predictions {
  std::size_t n_rows = 0;
  int n_outputs = 1;
  std::vector<double> values;
  std::vector<std::uint32_t> tree_counts;

  bool defined(std::size_t i) const { return tree_counts[i] > 0; }
  double at(std::size_t i, int k = 0) const {
    return values[i * static_cast<std::size_t>(n_outputs) +
                  static_cast<std::size_t>(k)];
  }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * static_cast<std::size_t>(n_outputs),
            static_cast<std::size_t>(n_outputs)};
  }
  std::size_t n_undefined() const;
};

Predictions predict(const ForestModel& model, const FeatureMatrix& rows,
                    Exec exec = Exec::parallel);
// Checks `rows` against the model schema first (SchemaError on mismatch).
Predictions predict(const ForestModel& model, const Dataset& rows,
                    Exec exec = Exec::parallel);

// Single row; `out` must hold n_outputs values.
void predict_row(const ForestModel& model, std::span<const double> x,
                 std::span<double> out);

// Out-of-bag predictions of the model's own training rows.
Predictions predict_oob(const ForestModel& model, const FeatureMatrix& train,
                        Exec exec = Exec::parallel);

// Argmax per row, lowest class index on ties; -1 for undefined rows.
std::vector<int> majority_vote(const Predictions& p);

// 1 - MSE / var(y) over defined rows (var with n - 1 denominator).
double explained_variance(const Predictions& p, std::span<const double> y);
double mean_absolute_error(const Predictions& p, std::span<const double> y);
// Fraction of defined rows whose majority vote differs from the label.
double error_rate(const Predictions& p, std::span<const int> labels);

}  // namespace ffloor
