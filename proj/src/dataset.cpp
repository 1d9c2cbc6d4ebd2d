#include "ffloor/dataset.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "ffloor/errors.hpp"

namespace ffloor {

const char* to_string(Task task) {
  return task == Task::classification ? "classification" : "regression";
}

Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw ConfigError("unknown task '" + s +
                    "' (expected regression or classification)");
}

int Schema::feature_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].name == name) return static_cast<int>(j);
  return -1;
}

std::size_t Dataset::n_rows() const {
  return task == Task::classification ? labels.size() : y.size();
}

int Dataset::feature_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].meta.name == name) return static_cast<int>(j);
  return -1;
}

std::vector<double> Dataset::row(std::size_t i) const {
  std::vector<double> out(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) out[j] = columns[j].values[i];
  return out;
}

Schema Dataset::schema() const {
  Schema s;
  s.task = task;
  s.target_name = target_name;
  s.class_names = task == Task::classification ? class_names
                                               : std::vector<std::string>{};
  s.columns.reserve(columns.size());
  for (const auto& c : columns) s.columns.push_back(c.meta);
  return s;
}

void Dataset::validate() const {
  const std::size_t n = n_rows();
  if (task == Task::regression) {
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(y[i]))
        throw DataError("target row " + std::to_string(i) + " is not finite");
  } else {
    if (class_names.empty())
      throw DataError("classification dataset without class names");
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] < 0 || labels[i] >= n_classes())
        throw DataError("class label out of range at row " + std::to_string(i));
  }
  for (const auto& c : columns) {
    if (c.values.size() != n)
      throw DataError("column '" + c.meta.name + "' has " +
                      std::to_string(c.values.size()) + " values, expected " +
                      std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double v = c.values[i];
      if (!std::isfinite(v))
        throw DataError("column '" + c.meta.name + "' row " +
                        std::to_string(i) + " is not finite");
      if (c.meta.categorical() &&
          (v != std::floor(v) || v < 1 || v > c.meta.n_levels()))
        throw DataError("column '" + c.meta.name + "' row " +
                        std::to_string(i) + " has invalid level code");
    }
  }
}

FeatureMatrix to_matrix(const Dataset& data) {
  FeatureMatrix m;
  m.n_rows = data.n_rows();
  m.n_cols = data.n_features();
  m.data.resize(m.n_rows * m.n_cols);
  for (std::size_t j = 0; j < m.n_cols; ++j) {
    const auto& v = data.columns[j].values;
    for (std::size_t i = 0; i < m.n_rows; ++i) m.data[i * m.n_cols + j] = v[i];
  }
  return m;
}

FeatureMatrix align_to_schema(const Dataset& data, const Schema& schema) {
  FeatureMatrix m;
  m.n_rows = data.n_rows();
  m.n_cols = schema.n_features();
  m.data.resize(m.n_rows * m.n_cols);
  for (std::size_t j = 0; j < m.n_cols; ++j) {
    const ColumnSchema& want = schema.columns[j];
    const int src = data.feature_index(want.name);
    if (src < 0)
      throw SchemaError("query data lacks column '" + want.name + "'");
    const FeatureColumn& col = data.columns[static_cast<std::size_t>(src)];
    if (col.values.size() != m.n_rows)
      throw SchemaError("column '" + want.name + "' has wrong length");
    if (want.categorical() != col.meta.categorical())
      throw SchemaError("column '" + want.name + "' kind differs from model");
    std::vector<double> recode;
    if (want.categorical()) {
      std::unordered_map<std::string, int> code;
      for (int k = 0; k < want.n_levels(); ++k) code[want.levels[k]] = k + 1;
      recode.assign(col.meta.levels.size() + 1, -1.0);
      for (std::size_t k = 0; k < col.meta.levels.size(); ++k) {
        auto it = code.find(col.meta.levels[k]);
        if (it != code.end()) recode[k + 1] = it->second;
      }
    }
    for (std::size_t i = 0; i < m.n_rows; ++i) {
      double v = col.values[i];
      if (want.categorical()) {
        const auto c = static_cast<std::size_t>(v);
        const std::string label =
            c >= 1 && c <= col.meta.levels.size() ? col.meta.levels[c - 1]
                                                  : std::to_string(v);
        if (c < 1 || c >= recode.size() || recode[c] < 0)
          throw SchemaError("unseen categorical level '" + label +
                            "' at row " + std::to_string(i) + ", column '" +
                            want.name + "'");
        v = recode[c];
      }
      m.data[i * m.n_cols + j] = v;
    }
  }
  return m;
}

std::vector<std::size_t> class_counts(const Dataset& data) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(data.n_classes()), 0);
  for (int label : data.labels) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

}  // namespace ffloor
