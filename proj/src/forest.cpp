#include "ffloor/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ffloor/errors.hpp"

namespace ffloor {

namespace {

constexpr int kMaxMaskLevels = 32;

// Split scores are maximized: sum_child (sum y)^2 / n for regression,
// sum_child sum_k n_k^2 / n for classification. loss = total - score.
struct NodeStats {
  std::vector<double> sums;  // regression: {sum}, classification: counts
  double sumsq = 0.0;        // regression only
  double n = 0.0;

  explicit NodeStats(int n_outputs) : sums(static_cast<std::size_t>(n_outputs)) {}

  void add(const Dataset& data, std::size_t row, double weight = 1.0) {
    n += weight;
    if (data.task == Task::regression) {
      const double v = data.y[row];
      sums[0] += weight * v;
      sumsq += weight * v * v;
    } else {
      sums[static_cast<std::size_t>(data.labels[row])] += weight;
    }
  }
  void add(const NodeStats& o) {
    n += o.n;
    sumsq += o.sumsq;
    for (std::size_t k = 0; k < sums.size(); ++k) sums[k] += o.sums[k];
  }
  void clear() {
    std::fill(sums.begin(), sums.end(), 0.0);
    sumsq = 0.0;
    n = 0.0;
  }
  double score() const {
    if (n <= 0.0) return 0.0;
    double s = 0.0;
    for (double v : sums) s += v * v;
    return s / n;
  }
};

double split_score(const NodeStats& parent, const NodeStats& left,
                   NodeStats& right_scratch) {
  right_scratch.n = parent.n - left.n;
  for (std::size_t k = 0; k < parent.sums.size(); ++k)
    right_scratch.sums[k] = parent.sums[k] - left.sums[k];
  return left.score() + right_scratch.score();
}

double total_term(const Dataset& data, const NodeStats& s) {
  return data.task == Task::regression ? s.sumsq : s.n;
}

bool better(double score, double best) {
  if (!std::isfinite(best)) return true;
  return score > best + 1e-12 * std::max(1.0, std::abs(best));
}

void fill_prediction(const Dataset& data, std::span<const std::size_t> rows,
                     std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const double n = static_cast<double>(rows.size());
  if (data.task == Task::regression) {
    double sum = 0.0;
    for (std::size_t r : rows) sum += data.y[r];
    out[0] = sum / n;
  } else {
    for (std::size_t r : rows) out[static_cast<std::size_t>(data.labels[r])] += 1.0;
    for (double& v : out) v /= n;
  }
}

bool constant_target(const Dataset& data, std::span<const std::size_t> rows) {
  if (data.task == Task::regression) {
    const double first = data.y[rows.front()];
    return std::all_of(rows.begin(), rows.end(),
                       [&](std::size_t r) { return data.y[r] == first; });
  }
  const int first = data.labels[rows.front()];
  return std::all_of(rows.begin(), rows.end(),
                     [&](std::size_t r) { return data.labels[r] == first; });
}

Tree grow_tree(const Dataset& data, const TrainConfig& cfg,
               std::span<const std::uint32_t> bag, SplitMix64& rng) {
  const int c = data.n_outputs();
  const auto cs = static_cast<std::size_t>(c);
  const std::size_t d = data.n_features();

  std::vector<std::size_t> rows;
  rows.reserve(cfg.sample_size);
  for (std::size_t i = 0; i < bag.size(); ++i)
    for (std::uint32_t t = 0; t < bag[i]; ++t) rows.push_back(i);

  Tree tree;
  tree.n_outputs = c;
  auto new_node = [&](int parent, std::size_t begin, std::size_t end) {
    TreeNode node;
    node.parent = parent;
    node.in_bag_count = end - begin;
    tree.nodes.push_back(node);
    tree.values.resize(tree.values.size() + cs);
    fill_prediction(data, {rows.data() + begin, end - begin},
                    {tree.values.data() + tree.values.size() - cs, cs});
    return static_cast<int>(tree.nodes.size() - 1);
  };

  struct Pending {
    int node;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<Pending> stack;
  stack.push_back({new_node(-1, 0, rows.size()), 0, rows.size()});

  std::vector<int> features(d);
  while (!stack.empty()) {
    const Pending p = stack.back();
    stack.pop_back();
    const std::span<const std::size_t> node_rows{rows.data() + p.begin,
                                                 p.end - p.begin};
    if (node_rows.size() <= static_cast<std::size_t>(cfg.min_node_size) ||
        constant_target(data, node_rows))
      continue;

    std::iota(features.begin(), features.end(), 0);
    for (std::size_t t = 0; t < static_cast<std::size_t>(cfg.mtry); ++t) {
      const std::size_t pick = t + rng.below(d - t);
      std::swap(features[t], features[pick]);
    }
    const SplitSearch search = best_split(
        node_rows, {features.data(), static_cast<std::size_t>(cfg.mtry)}, data);
    if (!search.best) continue;

    const SplitRule rule = search.best->rule;
    const auto& xs = data.columns[static_cast<std::size_t>(rule.feature)].values;
    auto mid_it = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                 rows.begin() + static_cast<std::ptrdiff_t>(p.end),
                                 [&](std::size_t r) { return rule.goes_left(xs[r]); });
    const auto mid = static_cast<std::size_t>(mid_it - rows.begin());

    const int left = new_node(p.node, p.begin, mid);
    const int right = new_node(p.node, mid, p.end);
    TreeNode& parent = tree.nodes[static_cast<std::size_t>(p.node)];
    parent.split = rule;
    parent.left = left;
    parent.right = right;
    stack.push_back({right, mid, p.end});
    stack.push_back({left, p.begin, mid});
  }
  return tree;
}

}  // namespace

TrainConfig TrainConfig::resolved(const Dataset& data) const {
  TrainConfig cfg = *this;
  const std::size_t n = data.n_rows();
  const std::size_t d = data.n_features();
  if (n == 0) throw ConfigError("cannot train on an empty dataset");
  if (d == 0) throw ConfigError("dataset has no feature columns");
  if (cfg.task != data.task)
    throw ConfigError(std::string("config task ") + to_string(cfg.task) +
                      " does not match dataset task " + to_string(data.task));
  if (cfg.n_tree < 1) throw ConfigError("n_tree must be >= 1");
  if (cfg.max_categorical_levels < 2 ||
      cfg.max_categorical_levels > kMaxMaskLevels)
    throw ConfigError("max_categorical_levels must lie in [2, 32]");

  if (cfg.mtry == 0) {
    cfg.mtry = cfg.task == Task::regression
                   ? std::max(1, static_cast<int>(d / 3))
                   : std::max(1, static_cast<int>(std::floor(
                                     std::sqrt(static_cast<double>(d)))));
  }
  if (cfg.mtry < 1 || static_cast<std::size_t>(cfg.mtry) > d)
    throw ConfigError("mtry must lie in [1, " + std::to_string(d) + "], got " +
                      std::to_string(cfg.mtry));
  if (cfg.min_node_size == 0)
    cfg.min_node_size = cfg.task == Task::regression ? 5 : 1;
  if (cfg.min_node_size < 1) throw ConfigError("min_node_size must be >= 1");

  if (!cfg.stratify.empty()) {
    if (cfg.task != Task::classification)
      throw ConfigError("stratified sampling requires a classification task");
    if (cfg.stratify.size() != static_cast<std::size_t>(data.n_classes()))
      throw ConfigError("stratify needs one count per class (" +
                        std::to_string(data.n_classes()) + ")");
    const std::size_t total =
        std::accumulate(cfg.stratify.begin(), cfg.stratify.end(), std::size_t{0});
    if (cfg.sample_size == 0) cfg.sample_size = total;
    if (total != cfg.sample_size)
      throw ConfigError("stratify counts sum to " + std::to_string(total) +
                        " but sample_size is " + std::to_string(cfg.sample_size));
    const auto counts = class_counts(data);
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (cfg.stratify[k] > 0 && counts[k] == 0)
        throw ConfigError("stratify draws from empty class " + data.class_names[k]);
      if (!cfg.replace && cfg.stratify[k] > counts[k])
        throw ConfigError("stratify count for class " + data.class_names[k] +
                          " exceeds its rows without replacement");
    }
  }
  if (cfg.sample_size == 0) cfg.sample_size = n;
  if (!cfg.replace && cfg.sample_size > n)
    throw ConfigError("sample_size exceeds N without replacement");

  for (const auto& col : data.columns)
    if (col.meta.categorical() && col.meta.n_levels() > cfg.max_categorical_levels)
      throw ConfigError("categorical feature '" + col.meta.name + "' has " +
                        std::to_string(col.meta.n_levels()) +
                        " levels, above max_categorical_levels=" +
                        std::to_string(cfg.max_categorical_levels));

  if (cfg.task == Task::classification) {
    const auto counts = class_counts(data);
    const auto present =
        std::count_if(counts.begin(), counts.end(), [](std::size_t v) { return v > 0; });
    if (present < 2)
      throw ConfigError("classification target has fewer than two classes");
  }
  return cfg;
}

std::size_t Tree::find_leaf(std::span<const double> x) const {
  std::size_t node = 0;
  while (const auto& split = nodes[node].split) {
    node = static_cast<std::size_t>(
        split->goes_left(x[static_cast<std::size_t>(split->feature)])
            ? nodes[node].left
            : nodes[node].right);
  }
  return node;
}

double gini_impurity(std::span<const double> class_counts) {
  double n = 0.0;
  for (double v : class_counts) {
    if (v < 0.0) throw DegenerateError("negative class count");
    n += v;
  }
  if (n <= 0.0) throw DegenerateError("gini impurity of an empty node");
  double s = 0.0;
  for (double v : class_counts) s += (v / n) * (v / n);
  return 1.0 - s;
}

SplitSearch best_split(std::span<const std::size_t> rows,
                       std::span<const int> candidate_features,
                       const Dataset& data) {
  SplitSearch out;
  const int c = data.n_outputs();
  NodeStats parent(c);
  for (std::size_t r : rows) parent.add(data, r);
  const double total = total_term(data, parent);
  out.parent_loss = total - parent.score();
  if (rows.size() < 2) return out;

  double best_score = -std::numeric_limits<double>::infinity();
  NodeStats left(c);
  NodeStats right(c);

  std::vector<std::pair<double, std::size_t>> sorted;
  for (int f : candidate_features) {
    const FeatureColumn& col = data.columns[static_cast<std::size_t>(f)];
    if (!col.meta.categorical()) {
      sorted.clear();
      for (std::size_t r : rows) sorted.emplace_back(col.values[r], r);
      std::sort(sorted.begin(), sorted.end());
      left.clear();
      for (std::size_t t = 0; t + 1 < sorted.size(); ++t) {
        left.add(data, sorted[t].second);
        const double lo = sorted[t].first;
        const double hi = sorted[t + 1].first;
        if (!(lo < hi)) continue;
        ++out.candidates_evaluated;
        const double score = split_score(parent, left, right);
        if (better(score, best_score)) {
          best_score = score;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          SplitCandidate cand;
          cand.rule.feature = f;
          cand.rule.threshold = mid;
          cand.n_left = static_cast<std::uint64_t>(left.n);
          cand.n_right = static_cast<std::uint64_t>(parent.n - left.n);
          out.best = cand;
        }
      }
    } else {
      const int n_levels = col.meta.n_levels();
      std::vector<NodeStats> per_level(static_cast<std::size_t>(n_levels), NodeStats(c));
      for (std::size_t r : rows)
        per_level[static_cast<std::size_t>(col.values[r]) - 1].add(data, r);
      std::vector<int> present;
      for (int lv = 0; lv < n_levels; ++lv)
        if (per_level[static_cast<std::size_t>(lv)].n > 0) present.push_back(lv);
      if (present.size() < 2) continue;
      const std::uint64_t n_masks = (std::uint64_t{1} << (present.size() - 1)) - 1;
      for (std::uint64_t m = 1; m <= n_masks; ++m) {
        ++out.candidates_evaluated;
        left.clear();
        std::uint32_t levels = 0;
        for (std::size_t t = 0; t + 1 < present.size(); ++t) {
          if ((m >> t) & 1U) {
            left.add(per_level[static_cast<std::size_t>(present[t])]);
            levels |= std::uint32_t{1} << present[t];
          }
        }
        const double score = split_score(parent, left, right);
        if (better(score, best_score)) {
          best_score = score;
          SplitCandidate cand;
          cand.rule.feature = f;
          cand.rule.categorical = true;
          cand.rule.left_levels = levels;
          cand.n_left = static_cast<std::uint64_t>(left.n);
          cand.n_right = static_cast<std::uint64_t>(parent.n - left.n);
          out.best = cand;
        }
      }
    }
  }
  if (out.best) {
    out.best->loss = total - best_score;
    const double eps = 1e-12 * std::max(1.0, std::abs(out.parent_loss));
    if (!(out.best->loss < out.parent_loss - eps)) out.best.reset();
  }
  return out;
}

std::vector<std::uint32_t> bootstrap_sample(std::size_t n_rows,
                                            std::span<const int> labels,
                                            const TrainConfig& config,
                                            SplitMix64& rng) {
  std::vector<std::uint32_t> bag(n_rows, 0);
  auto draw_from = [&](const std::vector<std::size_t>& pool, std::size_t count) {
    if (pool.empty() && count > 0)
      throw ConfigError("bootstrap draw from an empty pool");
    if (config.replace) {
      for (std::size_t t = 0; t < count; ++t) ++bag[pool[rng.below(pool.size())]];
    } else {
      if (count > pool.size())
        throw ConfigError("sample larger than pool without replacement");
      std::vector<std::size_t> perm = pool;
      for (std::size_t t = 0; t < count; ++t) {
        std::swap(perm[t], perm[t + rng.below(perm.size() - t)]);
        ++bag[perm[t]];
      }
    }
  };

  if (config.stratify.empty()) {
    std::vector<std::size_t> all(n_rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    draw_from(all, config.sample_size);
    return bag;
  }
  if (labels.size() != n_rows)
    throw ConfigError("stratified sampling needs class labels for every row");
  std::vector<std::vector<std::size_t>> by_class(config.stratify.size());
  for (std::size_t i = 0; i < n_rows; ++i)
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  for (std::size_t k = 0; k < by_class.size(); ++k)
    draw_from(by_class[k], config.stratify[k]);
  return bag;
}

ForestModel train_forest(const Dataset& data, const TrainConfig& config,
                         Exec exec) {
  data.validate();
  const TrainConfig cfg = config.resolved(data);
  const std::size_t n = data.n_rows();
  const auto n_tree = static_cast<std::size_t>(cfg.n_tree);
  const auto c = static_cast<std::size_t>(data.n_outputs());

  ForestModel model;
  model.schema = data.schema();
  model.config = cfg;
  model.n_train = n;
  model.trees.resize(n_tree);
  model.in_bag.assign(n * n_tree, 0);

  model.base_rate.assign(c, 0.0);
  if (data.task == Task::regression) {
    double sum = 0.0;
    for (double v : data.y) sum += v;
    model.base_rate[0] = sum / static_cast<double>(n);
  } else {
    for (int label : data.labels) model.base_rate[static_cast<std::size_t>(label)] += 1.0;
    for (double& v : model.base_rate) v /= static_cast<double>(n);
  }

  const std::span<const int> labels{data.labels};
  auto grow = [&](std::size_t j) {
    SplitMix64 rng(stream_seed(cfg.seed, j));
    const auto bag = bootstrap_sample(n, labels, cfg, rng);
    for (std::size_t i = 0; i < n; ++i) model.in_bag[i * n_tree + j] = bag[i];
    model.trees[j] = grow_tree(data, cfg, bag, rng);
  };

  if (exec == Exec::serial) {
    for (std::size_t j = 0; j < n_tree; ++j) grow(j);
  } else {
    const auto jobs = static_cast<std::int64_t>(n_tree);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
    for (std::int64_t j = 0; j < jobs; ++j) grow(static_cast<std::size_t>(j));
  }
  return model;
}

std::size_t Predictions::n_undefined() const {
  return static_cast<std::size_t>(
      std::count(tree_counts.begin(), tree_counts.end(), 0U));
}

void predict_row(const ForestModel& model, std::span<const double> x,
                 std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (const Tree& tree : model.trees) {
    const auto leaf = tree.prediction(tree.find_leaf(x));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += leaf[k];
  }
  const double inv = static_cast<double>(model.trees.size());
  for (double& v : out) v /= inv;
}

namespace {

// Shared body of predict and predict_oob. `use_tree(i, j)` selects the trees
// averaged for row i; accumulation runs in ascending tree order.
template <typename Select>
Predictions predict_impl(const ForestModel& model, const FeatureMatrix& rows,
                         Exec exec, Select use_tree) {
  if (rows.n_cols != model.n_features())
    throw SchemaError("query has " + std::to_string(rows.n_cols) +
                      " features, model expects " +
                      std::to_string(model.n_features()));
  Predictions p;
  p.n_rows = rows.n_rows;
  p.n_outputs = model.n_outputs();
  const auto c = static_cast<std::size_t>(p.n_outputs);
  p.values.assign(p.n_rows * c, 0.0);
  p.tree_counts.assign(p.n_rows, 0);

  auto body = [&](std::size_t i) {
    const auto x = rows.row(i);
    double* out = p.values.data() + i * c;
    std::uint32_t used = 0;
    for (std::size_t j = 0; j < model.trees.size(); ++j) {
      if (!use_tree(i, j)) continue;
      const Tree& tree = model.trees[j];
      const auto leaf = tree.prediction(tree.find_leaf(x));
      for (std::size_t k = 0; k < c; ++k) out[k] += leaf[k];
      ++used;
    }
    p.tree_counts[i] = used;
    for (std::size_t k = 0; k < c; ++k)
      out[k] = used > 0 ? out[k] / static_cast<double>(used)
                        : std::numeric_limits<double>::quiet_NaN();
  };

  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < p.n_rows; ++i) body(i);
  } else {
    const auto n = static_cast<std::int64_t>(p.n_rows);
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::int64_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
  }
  return p;
}

}  // namespace

Predictions predict(const ForestModel& model, const FeatureMatrix& rows,
                    Exec exec) {
  return predict_impl(model, rows, exec,
                      [](std::size_t, std::size_t) { return true; });
}

Predictions predict(const ForestModel& model, const Dataset& rows, Exec exec) {
  return predict(model, align_to_schema(rows, model.schema), exec);
}

Predictions predict_oob(const ForestModel& model, const FeatureMatrix& train,
                        Exec exec) {
  if (train.n_rows != model.n_train)
    throw SchemaError("predict_oob needs the model's own " +
                      std::to_string(model.n_train) + " training rows, got " +
                      std::to_string(train.n_rows));
  return predict_impl(model, train, exec, [&](std::size_t i, std::size_t j) {
    return model.bag_count(i, j) == 0;
  });
}

std::vector<int> majority_vote(const Predictions& p) {
  std::vector<int> out(p.n_rows, -1);
  for (std::size_t i = 0; i < p.n_rows; ++i) {
    if (!p.defined(i)) continue;
    const auto r = p.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double explained_variance(const Predictions& p, std::span<const double> y) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.n_rows; ++i)
    if (p.defined(i)) {
      sum += y[i];
      ++n;
    }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < p.n_rows; ++i)
    if (p.defined(i)) {
      ss += (y[i] - mean) * (y[i] - mean);
      sse += (y[i] - p.at(i)) * (y[i] - p.at(i));
    }
  const double var = ss / static_cast<double>(n - 1);
  return 1.0 - (sse / static_cast<double>(n)) / var;
}

double mean_absolute_error(const Predictions& p, std::span<const double> y) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.n_rows; ++i)
    if (p.defined(i)) {
      s += std::abs(y[i] - p.at(i));
      ++n;
    }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double error_rate(const Predictions& p, std::span<const int> labels) {
  const auto votes = majority_vote(p);
  std::size_t wrong = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.n_rows; ++i) {
    if (votes[i] < 0) continue;
    ++n;
    if (votes[i] != labels[i]) ++wrong;
  }
  return n ? static_cast<double>(wrong) / static_cast<double>(n)
           : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace ffloor
