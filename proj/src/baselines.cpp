#include "ffloor/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "ffloor/errors.hpp"

namespace ffloor {

std::size_t GridSpec::n_points() const {
  if (values.empty()) return 0;
  std::size_t n = 1;
  for (const auto& v : values) n *= v.size();
  return n;
}

std::vector<double> GridSpec::point(std::size_t p) const {
  std::vector<double> out(values.size());
  for (std::size_t f = values.size(); f-- > 0;) {
    out[f] = values[f][p % values[f].size()];
    p /= values[f].size();
  }
  return out;
}

void GridSpec::validate(const Dataset& data) const {
  if (features.empty() || features.size() > 2)
    throw ConfigError("grid must vary one or two features");
  if (features.size() != values.size())
    throw ConfigError("grid needs one value list per varied feature");
  if (features.size() == 2 && features[0] == features[1])
    throw ConfigError("varied features must be distinct");
  for (std::size_t f = 0; f < features.size(); ++f) {
    if (features[f] < 0 || static_cast<std::size_t>(features[f]) >= data.n_features())
      throw ConfigError("grid feature out of range");
    if (values[f].empty()) throw ConfigError("grid values must be non-empty");
    const ColumnSchema& meta = data.columns[static_cast<std::size_t>(features[f])].meta;
    for (double v : values[f]) {
      if (!std::isfinite(v)) throw ConfigError("grid values must be finite");
      if (meta.categorical() && (v != std::floor(v) || v < 1 || v > meta.n_levels()))
        throw ConfigError("grid value is not a level code of '" + meta.name + "'");
    }
  }
}

GridSpec default_grid(const Dataset& data, std::vector<int> features,
                      std::size_t max_points) {
  GridSpec g;
  g.features = std::move(features);
  for (int f : g.features) {
    if (f < 0 || static_cast<std::size_t>(f) >= data.n_features())
      throw ConfigError("grid feature out of range");
    const FeatureColumn& col = data.columns[static_cast<std::size_t>(f)];
    std::vector<double> v;
    if (col.meta.categorical()) {
      for (int lv = 1; lv <= col.meta.n_levels(); ++lv) v.push_back(lv);
    } else {
      std::vector<double> sorted = col.values;
      std::sort(sorted.begin(), sorted.end());
      std::vector<double> uniq = sorted;
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      if (uniq.size() <= max_points || max_points < 2) {
        v = uniq;
      } else {
        // Nearest-rank quantiles of the observed values.
        const std::size_t n = sorted.size();
        for (std::size_t q = 0; q < max_points; ++q) {
          const auto pos = static_cast<std::size_t>(std::llround(
              static_cast<double>(q) * static_cast<double>(n - 1) /
              static_cast<double>(max_points - 1)));
          v.push_back(sorted[pos]);
        }
        v.erase(std::unique(v.begin(), v.end()), v.end());
      }
    }
    g.values.push_back(std::move(v));
  }
  return g;
}

std::vector<double> centroid(const Dataset& data) {
  std::vector<double> c(data.n_features(), 0.0);
  for (std::size_t j = 0; j < data.n_features(); ++j) {
    const FeatureColumn& col = data.columns[j];
    if (col.meta.categorical()) {
      std::vector<std::size_t> counts(static_cast<std::size_t>(col.meta.n_levels()) + 1, 0);
      for (double v : col.values) ++counts[static_cast<std::size_t>(v)];
      const auto best = std::max_element(counts.begin() + 1, counts.end());
      c[j] = static_cast<double>(best - counts.begin());
    } else {
      double s = 0.0;
      for (double v : col.values) s += v;
      c[j] = s / static_cast<double>(col.values.size());
    }
  }
  return c;
}

namespace {

// Predicts `base` rows with the varied features set to every grid point;
// out[(row * n_points + p) * c + k]. Each tree is walked once per row with
// the set of grid points still alive; the set splits only at nodes testing a
// varied feature. Every point still collects one leaf per tree in ascending
// tree order, so results equal predict_row on the modified row bit for bit.
std::vector<double> grid_predictions(const ForestModel& model,
                                     const FeatureMatrix& base,
                                     const GridSpec& grid, Exec exec) {
  const std::size_t n_points = grid.n_points();
  const auto c = static_cast<std::size_t>(model.n_outputs());
  std::vector<std::vector<double>> points(n_points);
  for (std::size_t p = 0; p < n_points; ++p) points[p] = grid.point(p);
  std::vector<int> slot(model.n_features(), -1);
  for (std::size_t f = 0; f < grid.features.size(); ++f)
    slot[static_cast<std::size_t>(grid.features[f])] = static_cast<int>(f);
  std::vector<double> out(base.n_rows * n_points * c, 0.0);
  const double n_tree = static_cast<double>(model.trees.size());

  struct Frame {
    std::size_t node;
    std::size_t begin;
    std::size_t end;
  };
  auto body = [&](std::size_t i, std::vector<std::size_t>& alive, std::vector<Frame>& stack) {
    const auto x = base.row(i);
    double* acc = out.data() + i * n_points * c;
    for (const Tree& tree : model.trees) {
      std::iota(alive.begin(), alive.end(), std::size_t{0});
      stack.assign(1, Frame{0, 0, n_points});
      while (!stack.empty()) {
        const Frame fr = stack.back();
        stack.pop_back();
        const TreeNode& node = tree.nodes[fr.node];
        if (!node.split) {
          const auto leaf = tree.prediction(fr.node);
          for (std::size_t q = fr.begin; q < fr.end; ++q)
            for (std::size_t k = 0; k < c; ++k) acc[alive[q] * c + k] += leaf[k];
          continue;
        }
        const auto f = static_cast<std::size_t>(node.split->feature);
        if (slot[f] < 0) {
          const std::size_t next = static_cast<std::size_t>(
              node.split->goes_left(x[f]) ? node.left : node.right);
          stack.push_back({next, fr.begin, fr.end});
          continue;
        }
        const auto s = static_cast<std::size_t>(slot[f]);
        const auto mid = std::partition(
            alive.begin() + static_cast<std::ptrdiff_t>(fr.begin),
            alive.begin() + static_cast<std::ptrdiff_t>(fr.end),
            [&](std::size_t p) { return node.split->goes_left(points[p][s]); });
        const auto m = static_cast<std::size_t>(mid - alive.begin());
        if (m < fr.end) stack.push_back({static_cast<std::size_t>(node.right), m, fr.end});
        if (fr.begin < m) stack.push_back({static_cast<std::size_t>(node.left), fr.begin, m});
      }
    }
    for (std::size_t t = 0; t < n_points * c; ++t) acc[t] /= n_tree;
  };
  if (exec == Exec::serial) {
    std::vector<std::size_t> alive(n_points);
    std::vector<Frame> stack;
    for (std::size_t i = 0; i < base.n_rows; ++i) body(i, alive, stack);
  } else {
    const auto nr = static_cast<std::int64_t>(base.n_rows);
#pragma omp parallel num_threads(thread_count())
    {
      std::vector<std::size_t> alive(n_points);
      std::vector<Frame> stack;
#pragma omp for schedule(static)
      for (std::int64_t i = 0; i < nr; ++i) body(static_cast<std::size_t>(i), alive, stack);
    }
  }
  return out;
}

}  // namespace

CurveTable sensitivity_analysis(const ForestModel& model, const Dataset& data,
                                const GridSpec& grid, Exec exec) {
  grid.validate(data);
  FeatureMatrix base;
  base.n_rows = 1;
  base.n_cols = data.n_features();
  base.data = centroid(data);
  CurveTable t;
  t.grid = grid;
  t.n_outputs = model.n_outputs();
  t.values = grid_predictions(model, base, grid, exec);
  return t;
}

IceTable ice_curves(const ForestModel& model, const Dataset& data,
                    const GridSpec& grid, bool centered, Exec exec) {
  grid.validate(data);
  IceTable t;
  t.grid = grid;
  t.n_rows = data.n_rows();
  t.n_outputs = model.n_outputs();
  t.centered = centered;
  t.values = grid_predictions(model, align_to_schema(data, model.schema), grid, exec);
  if (centered) {
    const std::size_t np = grid.n_points();
    const auto c = static_cast<std::size_t>(t.n_outputs);
    for (std::size_t i = 0; i < t.n_rows; ++i) {
      double* curve = t.values.data() + i * np * c;
      for (std::size_t k = 0; k < c; ++k) {
        const double anchor = curve[k];
        for (std::size_t p = 0; p < np; ++p) curve[p * c + k] -= anchor;
      }
    }
  }
  return t;
}

CurveTable average_curves(const IceTable& ice) {
  CurveTable t;
  t.grid = ice.grid;
  t.n_outputs = ice.n_outputs;
  const std::size_t np = ice.grid.n_points();
  const auto c = static_cast<std::size_t>(ice.n_outputs);
  t.values.assign(np * c, 0.0);
  for (std::size_t i = 0; i < ice.n_rows; ++i)
    for (std::size_t t2 = 0; t2 < np * c; ++t2)
      t.values[t2] += ice.values[i * np * c + t2];
  for (double& v : t.values) v /= static_cast<double>(ice.n_rows);
  return t;
}

CurveTable partial_dependence(const ForestModel& model, const Dataset& data,
                              const GridSpec& grid, Exec exec) {
  return average_curves(ice_curves(model, data, grid, false, exec));
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_header(std::ofstream& out, const GridSpec& g, const Dataset& data,
                  int n_outputs) {
  for (int f : g.features) out << data.columns[static_cast<std::size_t>(f)].meta.name << ',';
  out << "row_id";
  for (int k = 0; k < n_outputs; ++k)
    out << ',' << (data.task == Task::classification
                       ? data.class_names[static_cast<std::size_t>(k)]
                       : std::string("prediction"));
  out << '\n';
}

}  // namespace

void write_curve_csv(const CurveTable& t, const Dataset& data,
                     const std::string& label, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_header(out, t.grid, data, t.n_outputs);
  for (std::size_t p = 0; p < t.grid.n_points(); ++p) {
    for (double v : t.grid.point(p)) out << num(v) << ',';
    out << label;
    for (int k = 0; k < t.n_outputs; ++k) out << ',' << num(t.at(p, k));
    out << '\n';
  }
}

void write_ice_csv(const IceTable& t, const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_header(out, t.grid, data, t.n_outputs);
  for (std::size_t p = 0; p < t.grid.n_points(); ++p) {
    const auto pt = t.grid.point(p);
    for (std::size_t i = 0; i < t.n_rows; ++i) {
      for (double v : pt) out << num(v) << ',';
      out << i;
      for (int k = 0; k < t.n_outputs; ++k) out << ',' << num(t.at(i, p, k));
      out << '\n';
    }
  }
}

}  // namespace ffloor
