#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ffloor/decompose.hpp"
#include "ffloor/errors.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace ffloor;
using namespace fft;

namespace {

TreeNode leaf(int parent) {
  TreeNode n;
  n.parent = parent;
  return n;
}

TreeNode split(int parent, int feature, double threshold, int left, int right) {
  TreeNode n;
  n.parent = parent;
  n.split = SplitRule{feature, false, threshold, 0};
  n.left = left;
  n.right = right;
  return n;
}

// Two numeric features, base 4.
// tree 0: root 5 [a <= .5] -> (3 [b <= .5] -> 1 | 4) | 7
// tree 1: root 4 [b <= .5] -> 2 | 6
ForestModel hand_forest() {
  ForestModel m;
  m.schema.columns = {ColumnSchema{"a", ColumnKind::numeric, {}},
                      ColumnSchema{"b", ColumnKind::numeric, {}}};
  m.base_rate = {4.0};
  Tree t0;
  t0.nodes = {split(-1, 0, 0.5, 1, 2), split(0, 1, 0.5, 3, 4), leaf(0), leaf(1), leaf(1)};
  t0.values = {5, 3, 7, 1, 4};
  Tree t1;
  t1.nodes = {split(-1, 1, 0.5, 1, 2), leaf(0), leaf(0)};
  t1.values = {4, 2, 6};
  m.trees = {t0, t1};
  m.n_train = 2;
  m.in_bag = {1, 0,   // row 0 in-bag for tree 0 only
              0, 0};  // row 1 out-of-bag everywhere
  return m;
}

FeatureMatrix matrix(std::size_t cols, std::vector<double> data) {
  FeatureMatrix x;
  x.n_cols = cols;
  x.n_rows = data.size() / cols;
  x.data = std::move(data);
  return x;
}

bool same_bits(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::memcmp(&a, &b, sizeof a) == 0;
}

}  // namespace

TEST_CASE("trace_row books each step under the splitting feature") {
  const ForestModel m = hand_forest();
  const std::vector<double> row{0.2, 0.2};
  const IncrementTrace t = trace_row(m, row, 0);
  REQUIRE(t.steps.size() == 3);
  CHECK(t.steps[0].feature == 0);
  CHECK(t.steps[0].delta[0] == 1.0);
  CHECK(t.steps[1].feature == 1);
  CHECK(t.steps[1].delta[0] == -2.0);
  CHECK(t.steps[2].feature == 2);
  CHECK(t.steps[2].delta[0] == -2.0);
  CHECK(t.leaf == 3);
  CHECK_THROWS_AS(trace_row(m, std::vector<double>{0.2}, 0), SchemaError);
}

TEST_CASE("hand-built forest: plain and OOB contributions") {
  const ForestModel m = hand_forest();
  const FeatureMatrix x = matrix(2, {0.2, 0.2, 0.8, 0.8});
  const ContributionMatrix f = feature_contributions(m, x, Exec::serial);
  CHECK(f.at(0, 0) == 0.5);
  CHECK(f.at(0, 1) == -1.0);
  CHECK(f.at(0, 2) == -2.0);
  CHECK(f.at(1, 0) == 0.5);
  CHECK(f.at(1, 1) == 1.0);
  CHECK(f.at(1, 2) == 1.0);
  CHECK(f.feature(1, 0) == 1.0);
  const Predictions p = predict(m, x);
  CHECK(p.at(0) == 1.5);
  CHECK(p.at(1) == 6.5);
  CHECK(verify_decomposition(m, f, p, Variant::plain).max_residual == 0.0);

  const ContributionMatrix o = oob_feature_contributions(m, x, Exec::serial);
  CHECK(o.tree_counts == std::vector<std::uint32_t>{1, 2});
  CHECK(o.at(0, 0) == 0.0);
  CHECK(o.at(0, 1) == 0.0);
  CHECK(o.at(0, 2) == -2.0);
  CHECK(o.at(1, 1) == 1.0);
  const Predictions po = predict_oob(m, x);
  CHECK(po.at(0) == 2.0);
  CHECK(verify_decomposition(m, o, po, Variant::oob).pass);
  CHECK_THROWS_AS(verify_decomposition(m, o, p, Variant::plain), ConfigError);
}

TEST_CASE("contributions equal the brute-force oracle on 25 random mini forests") {
  SplitMix64 rng(2024);
  for (int rep = 0; rep < 25; ++rep) {
    const Task task = rep % 2 ? Task::classification : Task::regression;
    const Dataset d = fft::random_mini(rng, task);
    TrainConfig c;
    c.task = task;
    c.n_tree = 1 + static_cast<int>(rng.below(5));
    c.seed = rng.next();
    c.min_node_size = 1;
    c.mtry = 1 + static_cast<int>(rng.below(d.n_features()));
    const ForestModel m = train_forest(d, c);
    const FeatureMatrix x = to_matrix(d);
    for (const bool oob : {false, true}) {
      const ContributionMatrix f =
          oob ? oob_feature_contributions(m, x) : feature_contributions(m, x);
      const auto expect = oracle_contributions(m, x, oob);
      REQUIRE(f.values.size() == expect.size());
      std::size_t mismatches = 0;
      for (std::size_t q = 0; q < expect.size(); ++q)
        if (!same_bits(f.values[q], expect[q])) ++mismatches;
      CHECK(mismatches == 0);
    }
  }
}

TEST_CASE("decomposition identity on trained forests") {
  for (int task = 0; task < 2; ++task) {
    const Dataset d = task == 0 ? random_regression(300, 4, 3) : random_classification(300, 3);
    TrainConfig c;
    c.task = d.task;
    c.n_tree = 40;
    const ForestModel m = train_forest(d, c);
    const FeatureMatrix x = to_matrix(d);
    const auto rp =
        verify_decomposition(m, feature_contributions(m, x), predict(m, x), Variant::plain);
    CHECK(rp.max_residual <= 1e-9);
    CHECK(rp.rows_checked == 300);
    const auto ro = verify_decomposition(m, oob_feature_contributions(m, x),
                                         predict_oob(m, x), Variant::oob);
    CHECK(ro.max_residual <= 1e-9);
    CHECK(ro.rows_checked + ro.rows_undefined == 300);
  }
}

TEST_CASE("classification contributions sum to zero across classes") {
  const Dataset d = random_classification(200, 5);
  TrainConfig c;
  c.task = Task::classification;
  c.n_tree = 30;
  const ForestModel m = train_forest(d, c);
  const ContributionMatrix f = feature_contributions(m, to_matrix(d));
  for (std::size_t i = 0; i < f.n_rows; ++i)
    for (std::size_t l = 0; l < f.n_columns(); ++l) {
      double s = 0.0;
      for (int k = 0; k < f.n_outputs; ++k) s += f.at(i, l, k);
      CHECK(std::abs(s) <= 1e-12);
    }
}

TEST_CASE("OOB equals plain when no row is in-bag anywhere") {
  const Dataset d = random_regression(60, 3, 9);
  TrainConfig c;
  c.n_tree = 10;
  ForestModel m = train_forest(d, c);
  std::fill(m.in_bag.begin(), m.in_bag.end(), 0U);
  const FeatureMatrix x = to_matrix(d);
  const auto plain = feature_contributions(m, x);
  const auto oob = oob_feature_contributions(m, x);
  CHECK(plain.values == oob.values);
  CHECK(plain.tree_counts == oob.tree_counts);
}

TEST_CASE("stratified bootstrap step equals the stratification offset") {
  const Dataset d = random_classification(150, 6);
  TrainConfig c;
  c.task = Task::classification;
  c.n_tree = 20;
  c.stratify = {20, 20, 20};
  const ForestModel m = train_forest(d, c);
  const ContributionMatrix f = feature_contributions(m, to_matrix(d));
  for (std::size_t i = 0; i < f.n_rows; ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(f.at(i, 0, k) - (1.0 / 3.0 - m.base_rate[static_cast<std::size_t>(k)])) <=
            1e-12);
}

TEST_CASE("undefined OOB rows hold NaN and export as NA") {
  const Dataset d = random_regression(30, 2, 12);
  TrainConfig c;
  c.n_tree = 1;
  const ForestModel m = train_forest(d, c);
  const ContributionMatrix o = oob_feature_contributions(m, to_matrix(d));
  REQUIRE(o.n_undefined() > 0);
  std::size_t undefined_row = 0;
  while (o.defined(undefined_row)) ++undefined_row;
  CHECK(std::isnan(o.at(undefined_row, 1)));

  const auto dir = std::filesystem::temp_directory_path() / "ff_decompose_test";
  std::filesystem::create_directories(dir);
  const std::string csv = (dir / "c.csv").string();
  write_contributions_csv(o, d.schema(), csv);
  std::ifstream in(csv);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "row_id,feature,class,contribution");
  bool saw_na = false;
  while (std::getline(in, line))
    if (line.rfind(std::to_string(undefined_row) + ",", 0) == 0 && line.ends_with(",NA"))
      saw_na = true;
  CHECK(saw_na);

  const std::string js = (dir / "c.json").string();
  write_contributions_json(o, d.schema(), js);
  const ContributionMatrix back = read_contributions_json(js);
  CHECK(back.variant == Variant::oob);
  CHECK(back.tree_counts == o.tree_counts);
  REQUIRE(back.values.size() == o.values.size());
  for (std::size_t q = 0; q < o.values.size(); ++q) CHECK(same_bits(back.values[q], o.values[q]));
  std::ofstream(dir / "bad.json") << "{\"format\":\"forestfloor-contributions\"";
  CHECK_THROWS_AS(read_contributions_json((dir / "bad.json").string()), FormatError);
}

TEST_CASE("in-bag weighted displacement over a binary feature vanishes") {
  const Dataset d = random_classification(200, 7);
  TrainConfig c;
  c.task = Task::classification;
  c.n_tree = 30;
  c.mtry = 2;
  c.sample_size = 60;
  const ForestModel m = train_forest(d, c);
  const auto groups = inbag_group_displacement(m, to_matrix(d), 3);
  REQUIRE(groups.size() == 4);
  double weight = 0.0;
  std::vector<double> sum(3, 0.0);
  for (const auto& g : groups) {
    weight += g.weight;
    for (std::size_t k = 0; k < 3; ++k) sum[k] += g.weighted_sum[k];
  }
  CHECK(weight == doctest::Approx(60.0 * 30.0));
  for (double s : sum) CHECK(std::abs(s / weight) <= 1e-9);
}
