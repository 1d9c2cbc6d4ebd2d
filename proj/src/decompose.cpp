#include "ffloor/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "ffloor/errors.hpp"

namespace ffloor {

using json = nlohmann::json;

const char* to_string(Variant v) { return v == Variant::oob ? "oob" : "plain"; }

std::size_t ContributionMatrix::n_undefined() const {
  return static_cast<std::size_t>(
      std::count(tree_counts.begin(), tree_counts.end(), 0U));
}

IncrementTrace trace_row(const ForestModel& model, std::span<const double> row,
                         std::size_t tree_index) {
  if (row.size() != model.n_features())
    throw SchemaError("row has " + std::to_string(row.size()) +
                      " features, model expects " +
                      std::to_string(model.n_features()));
  for (std::size_t j = 0; j < row.size(); ++j) {
    const ColumnSchema& col = model.schema.columns[j];
    if (col.categorical() &&
        (row[j] != std::floor(row[j]) || row[j] < 1 || row[j] > col.n_levels()))
      throw SchemaError("unseen categorical level code " + std::to_string(row[j]) +
                        " in column '" + col.name + "'");
  }
  const Tree& tree = model.trees.at(tree_index);
  const auto c = static_cast<std::size_t>(tree.n_outputs);
  IncrementTrace trace;
  trace.tree = tree_index;

  auto step = [&](int feature, std::span<const double> to,
                  std::span<const double> from) {
    Increment inc;
    inc.feature = feature;
    inc.delta.resize(c);
    for (std::size_t k = 0; k < c; ++k) inc.delta[k] = to[k] - from[k];
    trace.steps.push_back(std::move(inc));
  };

  std::size_t node = 0;
  step(0, tree.prediction(0), model.base_rate);
  while (const auto& split = tree.nodes[node].split) {
    const std::size_t next = static_cast<std::size_t>(
        split->goes_left(row[static_cast<std::size_t>(split->feature)])
            ? tree.nodes[node].left
            : tree.nodes[node].right);
    step(split->feature + 1, tree.prediction(next), tree.prediction(node));
    node = next;
  }
  trace.leaf = node;
  return trace;
}

namespace {

template <typename Select>
ContributionMatrix contributions_impl(const ForestModel& model,
                                      const FeatureMatrix& rows, Exec exec,
                                      Variant variant, Select use_tree) {
  if (rows.n_cols != model.n_features())
    throw SchemaError("rows have " + std::to_string(rows.n_cols) +
                      " features, model expects " +
                      std::to_string(model.n_features()));
  ContributionMatrix m;
  m.variant = variant;
  m.n_rows = rows.n_rows;
  m.n_features = model.n_features();
  m.n_outputs = model.n_outputs();
  m.base_rate = model.base_rate;
  m.values.assign(m.n_rows * m.n_columns() * static_cast<std::size_t>(m.n_outputs),
                  0.0);
  m.tree_counts.assign(m.n_rows, 0);
  const auto c = static_cast<std::size_t>(m.n_outputs);
  const std::span<const double> base{model.base_rate};

  auto body = [&](std::size_t i) {
    const auto x = rows.row(i);
    double* f = m.values.data() + i * m.n_columns() * c;
    std::uint32_t used = 0;
    for (std::size_t j = 0; j < model.trees.size(); ++j) {
      if (!use_tree(i, j)) continue;
      ++used;
      const Tree& tree = model.trees[j];
      std::size_t node = 0;
      auto root = tree.prediction(0);
      for (std::size_t k = 0; k < c; ++k) f[k] += root[k] - base[k];
      while (const auto& split = tree.nodes[node].split) {
        const std::size_t next = static_cast<std::size_t>(
            split->goes_left(x[static_cast<std::size_t>(split->feature)])
                ? tree.nodes[node].left
                : tree.nodes[node].right);
        const auto from = tree.prediction(node);
        const auto to = tree.prediction(next);
        double* cell = f + static_cast<std::size_t>(split->feature + 1) * c;
        for (std::size_t k = 0; k < c; ++k) cell[k] += to[k] - from[k];
        node = next;
      }
    }
    m.tree_counts[i] = used;
    const double denom = static_cast<double>(used);
    for (std::size_t t = 0; t < m.n_columns() * c; ++t)
      f[t] = used > 0 ? f[t] / denom : std::numeric_limits<double>::quiet_NaN();
  };

  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < m.n_rows; ++i) body(i);
  } else {
    const auto n = static_cast<std::int64_t>(m.n_rows);
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::int64_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
  }
  return m;
}

}  // namespace

ContributionMatrix feature_contributions(const ForestModel& model,
                                         const FeatureMatrix& rows, Exec exec) {
  return contributions_impl(model, rows, exec, Variant::plain,
                            [](std::size_t, std::size_t) { return true; });
}

ContributionMatrix oob_feature_contributions(const ForestModel& model,
                                             const FeatureMatrix& train,
                                             Exec exec) {
  if (train.n_rows != model.n_train)
    throw SchemaError("OOB contributions need the model's own " +
                      std::to_string(model.n_train) + " training rows, got " +
                      std::to_string(train.n_rows));
  return contributions_impl(model, train, exec, Variant::oob,
                            [&](std::size_t i, std::size_t j) {
                              return model.bag_count(i, j) == 0;
                            });
}

DecompositionReport verify_decomposition(const ForestModel& model,
                                         const ContributionMatrix& m,
                                         const Predictions& predictions,
                                         Variant predictions_variant) {
  if (m.variant != predictions_variant)
    throw ConfigError(std::string("cannot verify ") + to_string(m.variant) +
                      " contributions against " +
                      to_string(predictions_variant) + " predictions");
  if (m.n_rows != predictions.n_rows || m.n_outputs != predictions.n_outputs)
    throw ConfigError("contribution matrix and predictions differ in shape");
  DecompositionReport r;
  r.variant = m.variant;
  const auto c = static_cast<std::size_t>(m.n_outputs);
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    if (!m.defined(i) || !predictions.defined(i)) {
      ++r.rows_undefined;
      continue;
    }
    ++r.rows_checked;
    for (std::size_t k = 0; k < c; ++k) {
      double sum = model.base_rate[k];
      for (std::size_t l = 0; l < m.n_columns(); ++l)
        sum += m.at(i, l, static_cast<int>(k));
      const double res = std::abs(sum - predictions.at(i, static_cast<int>(k)));
      if (!(res <= r.max_residual)) r.max_residual = res;  // NaN propagates
    }
  }
  r.pass = r.max_residual <= DecompositionReport::kTolerance;
  return r;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string feature_label(const Schema& schema, std::size_t l) {
  return l == 0 ? "bootstrap" : schema.columns[l - 1].name;
}

std::string output_label(const Schema& schema, int k) {
  return schema.task == Task::classification
             ? schema.class_names[static_cast<std::size_t>(k)]
             : "value";
}

}  // namespace

void write_contributions_csv(const ContributionMatrix& m, const Schema& schema,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "row_id,feature,class,contribution\n";
  for (std::size_t i = 0; i < m.n_rows; ++i)
    for (std::size_t l = 0; l < m.n_columns(); ++l)
      for (int k = 0; k < m.n_outputs; ++k)
        out << i << ',' << feature_label(schema, l) << ','
            << output_label(schema, k) << ','
            << (m.defined(i) ? fmt17(m.at(i, l, k)) : std::string("NA")) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string contributions_json(const ContributionMatrix& m, const Schema& schema) {
  json j;
  j["format"] = "forestfloor-contributions";
  j["version"] = 1;
  j["variant"] = to_string(m.variant);
  j["n_rows"] = m.n_rows;
  j["n_features"] = m.n_features;
  j["n_outputs"] = m.n_outputs;
  std::vector<std::string> names{"bootstrap"};
  for (const auto& c : schema.columns) names.push_back(c.name);
  j["columns"] = names;
  std::vector<std::string> outputs;
  for (int k = 0; k < m.n_outputs; ++k) outputs.push_back(output_label(schema, k));
  j["outputs"] = outputs;
  j["base_rate"] = m.base_rate;
  j["tree_counts"] = m.tree_counts;
  json values = json::array();
  for (std::size_t t = 0; t < m.values.size(); ++t) {
    const std::size_t i = t / (m.n_columns() * static_cast<std::size_t>(m.n_outputs));
    values.push_back(m.defined(i) ? json(m.values[t]) : json(nullptr));
  }
  j["values"] = std::move(values);
  return j.dump();
}

void write_contributions_json(const ContributionMatrix& m, const Schema& schema,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << contributions_json(m, schema) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

ContributionMatrix read_contributions_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "forestfloor-contributions" || j.at("version") != 1)
      throw FormatError("'" + path + "' is not a version 1 contribution bundle");
    ContributionMatrix m;
    m.variant = j.at("variant") == "oob" ? Variant::oob : Variant::plain;
    m.n_rows = j.at("n_rows").get<std::size_t>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.n_outputs = j.at("n_outputs").get<int>();
    m.base_rate = j.at("base_rate").get<std::vector<double>>();
    m.tree_counts = j.at("tree_counts").get<std::vector<std::uint32_t>>();
    const auto& values = j.at("values");
    if (values.size() !=
        m.n_rows * m.n_columns() * static_cast<std::size_t>(m.n_outputs))
      throw FormatError("'" + path + "' has a truncated value array");
    m.values.reserve(values.size());
    for (const auto& v : values)
      m.values.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                     : v.get<double>());
    return m;
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is malformed: " + e.what());
  }
}

std::vector<double> GroupDisplacement::mean() const {
  std::vector<double> out(weighted_sum.size(), 0.0);
  if (weight > 0)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = weighted_sum[k] / weight;
  return out;
}

std::vector<GroupDisplacement> inbag_group_displacement(
    const ForestModel& model, const FeatureMatrix& train, std::size_t column) {
  if (train.n_rows != model.n_train)
    throw SchemaError("group displacement needs the model's training rows");
  if (column >= model.n_features())
    throw ConfigError("column index out of range");
  const auto c = static_cast<std::size_t>(model.n_outputs());
  std::map<double, std::size_t> group_of;
  for (std::size_t i = 0; i < train.n_rows; ++i) group_of.emplace(train.at(i, column), 0);
  std::vector<GroupDisplacement> groups;
  for (auto& [value, idx] : group_of) {
    idx = groups.size();
    GroupDisplacement g;
    g.value = value;
    g.weighted_sum.assign(c, 0.0);
    groups.push_back(std::move(g));
  }
  const int split_feature = static_cast<int>(column);
  for (std::size_t i = 0; i < train.n_rows; ++i) {
    GroupDisplacement& g = groups[group_of.at(train.at(i, column))];
    ++g.rows;
    const auto x = train.row(i);
    for (std::size_t j = 0; j < model.n_tree(); ++j) {
      const double w = model.bag_count(i, j);
      if (w == 0) continue;
      g.weight += w;
      const Tree& tree = model.trees[j];
      std::size_t node = 0;
      while (const auto& split = tree.nodes[node].split) {
        const std::size_t next = static_cast<std::size_t>(
            split->goes_left(x[static_cast<std::size_t>(split->feature)])
                ? tree.nodes[node].left
                : tree.nodes[node].right);
        if (split->feature == split_feature) {
          const auto from = tree.prediction(node);
          const auto to = tree.prediction(next);
          for (std::size_t k = 0; k < c; ++k) g.weighted_sum[k] += w * (to[k] - from[k]);
        }
        node = next;
      }
    }
  }
  return groups;
}

}  // namespace ffloor
