// Small dataset builders shared by the unit tests.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ffloor/dataset.hpp"
#include "ffloor/rng.hpp"

namespace fft {

using namespace ffloor;

inline FeatureColumn numeric(const std::string& name, std::vector<double> v) {
  FeatureColumn c;
  c.meta.name = name;
  c.values = std::move(v);
  return c;
}

inline FeatureColumn categorical(const std::string& name, std::vector<std::string> levels,
                                 std::vector<double> codes) {
  FeatureColumn c;
  c.meta.name = name;
  c.meta.kind = ColumnKind::categorical;
  c.meta.levels = std::move(levels);
  c.values = std::move(codes);
  return c;
}

inline Dataset regression(std::vector<FeatureColumn> cols, std::vector<double> y) {
  Dataset d;
  d.columns = std::move(cols);
  d.y = std::move(y);
  d.validate();
  return d;
}

inline Dataset classification(std::vector<FeatureColumn> cols, std::vector<int> labels,
                              std::vector<std::string> classes) {
  Dataset d;
  d.task = Task::classification;
  d.target_name = "class";
  d.columns = std::move(cols);
  d.labels = std::move(labels);
  d.class_names = std::move(classes);
  d.validate();
  return d;
}

// n rows, d numeric U(-1, 1) features; y = x0 + x1^2 + noise.
inline Dataset random_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Dataset data;
  for (std::size_t j = 0; j < d; ++j) {
    FeatureColumn c;
    c.meta.name = "x" + std::to_string(j + 1);
    for (std::size_t i = 0; i < n; ++i) c.values.push_back(rng.uniform(-1.0, 1.0));
    data.columns.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double a = data.columns[0].values[i];
    const double b = d > 1 ? data.columns[1].values[i] : 0.0;
    data.y.push_back(a + b * b + 0.1 * rng.normal());
  }
  data.validate();
  return data;
}

// Three classes from the sign pattern of x0 and x1, with label noise; one
// categorical column with four levels carries extra signal.
inline Dataset random_classification(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Dataset data;
  data.task = Task::classification;
  data.class_names = {"a", "b", "c"};
  data.columns.push_back(numeric("x1", {}));
  data.columns.push_back(numeric("x2", {}));
  data.columns.push_back(numeric("x3", {}));
  data.columns.push_back(categorical("g", {"p", "q", "r", "s"}, {}));
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double c = rng.uniform(-1.0, 1.0);
    const auto g = static_cast<double>(1 + rng.below(4));
    data.columns[0].values.push_back(a);
    data.columns[1].values.push_back(b);
    data.columns[2].values.push_back(c);
    data.columns[3].values.push_back(g);
    int label = a < 0 ? 0 : (b < 0 ? 1 : 2);
    if (g == 4.0 && rng.uniform() < 0.5) label = 2;
    if (rng.uniform() < 0.1) label = static_cast<int>(rng.below(3));
    data.labels.push_back(label);
  }
  data.validate();
  return data;
}

}  // namespace fft
