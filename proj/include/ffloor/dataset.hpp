#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ffloor {

enum class Task { regression, classification };

enum class ColumnKind { numeric, categorical };

const char* to_string(Task task);
Task task_from_string(const std::string& s);

// Column metadata without values. Categorical values are coded 1..K' and
// levels[code - 1] is the label of code.
struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> levels;

  bool categorical() const { return kind == ColumnKind::categorical; }
  int n_levels() const { return static_cast<int>(levels.size()); }
  bool operator==(const ColumnSchema&) const = default;
};

struct Schema {
  std::vector<ColumnSchema> columns;
  Task task = Task::regression;
  std::string target_name;
  std::vector<std::string> class_names;  // classification only

  std::size_t n_features() const { return columns.size(); }
  // 1 for regression, K for classification.
  int n_outputs() const {
    return task == Task::classification ? static_cast<int>(class_names.size())
                                        : 1;
  }
  int feature_index(const std::string& name) const;  // -1 if absent
  bool operator==(const Schema&) const = default;
};

struct FeatureColumn {
  ColumnSchema meta;
  std::vector<double> values;
};

// Columnar table of features plus a regression or class target.
// Classification labels are 0-based indices into class_names.
struct Dataset {
  std::vector<FeatureColumn> columns;
  Task task = Task::regression;
  std::string target_name = "y";
  std::vector<double> y;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t n_rows() const;
  std::size_t n_features() const { return columns.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }
  int n_outputs() const {
    return task == Task::classification ? n_classes() : 1;
  }

  const FeatureColumn& column(std::size_t j) const { return columns[j]; }
  int feature_index(const std::string& name) const;
  std::vector<double> row(std::size_t i) const;
  Schema schema() const;

  // Throws DataError when any invariant is violated: column lengths,
  // non-finite values, categorical codes outside 1..K', labels out of range.
  void validate() const;
};

// Dense row-major copy of the feature part of a dataset; this is what tree
// traversal consumes.
struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * n_cols, n_cols};
  }
  std::span<double> row(std::size_t i) {
    return {data.data() + i * n_cols, n_cols};
  }
  double at(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }
};

FeatureMatrix to_matrix(const Dataset& data);

// Recodes the features of `data` onto `schema` by column name and level
// label. Unknown columns or unseen levels raise SchemaError naming the row,
// column and level.
FeatureMatrix align_to_schema(const Dataset& data, const Schema& schema);

// Per-class row counts of a classification dataset.
std::vector<std::size_t> class_counts(const Dataset& data);

}  // namespace ffloor
