#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ffloor/errors.hpp"
#include "ffloor/forest.hpp"
#include "helpers.hpp"
#include "invariants.hpp"

using namespace ffloor;
using namespace fft;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

TEST_CASE("gini impurity examples") {
  CHECK(gini_impurity(std::vector<double>{5, 5}) == doctest::Approx(0.5));
  CHECK(gini_impurity(std::vector<double>{10, 0}) == 0.0);
  CHECK(gini_impurity(std::vector<double>{1, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(gini_impurity(std::vector<double>{0, 0}), DegenerateError);
  CHECK_THROWS_AS(gini_impurity(std::vector<double>{-1, 2}), DegenerateError);
}

TEST_CASE("regression split at the midpoint of the separating gap") {
  const Dataset d = regression({numeric("a", {1, 2, 3, 4})}, {0, 0, 10, 10});
  const auto rows = all_rows(4);
  const std::vector<int> feats{0};
  const SplitSearch s = best_split(rows, feats, d);
  REQUIRE(s.best);
  CHECK(s.best->rule.threshold == 2.5);
  CHECK(s.best->loss == 0.0);
  CHECK(s.parent_loss == doctest::Approx(100.0));
  CHECK(s.best->n_left == 2);
  CHECK(s.best->n_right == 2);
  CHECK(s.candidates_evaluated == 3);
}

TEST_CASE("ties go to the earlier drawn feature, then the smaller break point") {
  SUBCASE("feature order") {
    const Dataset d =
        regression({numeric("a", {1, 2, 3, 4}), numeric("b", {1, 2, 3, 4})}, {0, 0, 1, 1});
    const auto rows = all_rows(4);
    CHECK(best_split(rows, std::vector<int>{1, 0}, d).best->rule.feature == 1);
    CHECK(best_split(rows, std::vector<int>{0, 1}, d).best->rule.feature == 0);
  }
  SUBCASE("break point") {
    // Splits at 1.5 and 3.5 both leave SSE 50/3.
    const Dataset d = regression({numeric("a", {1, 2, 3, 4})}, {0, 5, 0, 5});
    const auto rows = all_rows(4);
    const auto s = best_split(rows, std::vector<int>{0}, d);
    REQUIRE(s.best);
    CHECK(s.best->rule.threshold == 1.5);
  }
}

TEST_CASE("duplicated rows: break points only between distinct values") {
  const Dataset d = regression({numeric("a", {1, 1, 1, 2, 2})}, {0, 0, 1, 5, 5});
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 4};  // bag multiplicity
  const auto s = best_split(rows, std::vector<int>{0}, d);
  REQUIRE(s.best);
  CHECK(s.candidates_evaluated == 1);
  CHECK(s.best->rule.threshold == 1.5);
  CHECK(s.best->n_left == 3);
  CHECK(s.best->n_right == 3);
}

TEST_CASE("categorical partitions enumerate 2^(p-1)-1 candidates") {
  for (int p = 2; p <= 8; ++p) {
    std::vector<std::string> levels;
    std::vector<double> codes;
    std::vector<double> y;
    for (int l = 1; l <= p; ++l) {
      levels.push_back("L" + std::to_string(l));
      codes.push_back(l);
      codes.push_back(l);
      y.push_back(l % 3);
      y.push_back(l % 3 + 0.5);
    }
    const Dataset d = regression({categorical("g", levels, codes)}, y);
    const auto rows = all_rows(d.n_rows());
    const auto s = best_split(rows, std::vector<int>{0}, d);
    CHECK(s.candidates_evaluated == (std::size_t{1} << (p - 1)) - 1);
  }
}

TEST_CASE("categorical split masks and absent levels") {
  SUBCASE("middle level isolated") {
    const Dataset d = regression({categorical("g", {"u", "v", "w"}, {1, 2, 3, 1, 2, 3})},
                                 {0, 10, 0, 0, 10, 0});
    const auto rows = all_rows(6);
    const auto s = best_split(rows, std::vector<int>{0}, d);
    REQUIRE(s.best);
    CHECK(s.best->rule.categorical);
    CHECK(s.best->rule.left_levels == 0b010U);
    CHECK(s.best->loss == 0.0);
    CHECK(s.best->rule.goes_left(2.0));
    CHECK_FALSE(s.best->rule.goes_left(1.0));
  }
  SUBCASE("levels absent from the node go right") {
    const Dataset d = regression(
        {categorical("g", {"u", "v", "w", "z"}, {1, 2, 1, 2, 3, 4})}, {0, 9, 0, 9, 4, 4});
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const auto s = best_split(rows, std::vector<int>{0}, d);
    REQUIRE(s.best);
    CHECK(s.candidates_evaluated == 1);
    CHECK(s.best->rule.left_levels == 0b0001U);
    CHECK_FALSE(s.best->rule.goes_left(3.0));
    CHECK_FALSE(s.best->rule.goes_left(4.0));
  }
}

TEST_CASE("no split without strict improvement") {
  SUBCASE("constant target") {
    const Dataset d = regression({numeric("a", {1, 2, 3})}, {4, 4, 4});
    const auto rows = all_rows(3);
    CHECK_FALSE(best_split(rows, std::vector<int>{0}, d).best);
  }
  SUBCASE("constant feature") {
    const Dataset d = regression({numeric("a", {1, 1, 1})}, {1, 2, 3});
    const auto rows = all_rows(3);
    const auto s = best_split(rows, std::vector<int>{0}, d);
    CHECK_FALSE(s.best);
    CHECK(s.candidates_evaluated == 0);
  }
  SUBCASE("classification split that leaves Gini unchanged") {
    // Both children keep the 50/50 mix.
    const Dataset d = classification({numeric("a", {1, 1, 2, 2})}, {0, 1, 0, 1}, {"p", "q"});
    const auto rows = all_rows(4);
    CHECK_FALSE(best_split(rows, std::vector<int>{0}, d).best);
  }
}

TEST_CASE("bootstrap sample sizes") {
  const std::vector<int> labels{0, 0, 0, 1, 1, 2, 2, 2, 2, 2};
  SplitMix64 rng(3);
  TrainConfig c;
  c.sample_size = 10;
  for (int rep = 0; rep < 20; ++rep) {
    const auto bag = bootstrap_sample(10, {}, c, rng);
    CHECK(std::accumulate(bag.begin(), bag.end(), 0U) == 10U);
  }
  c.replace = false;
  c.sample_size = 6;
  for (int rep = 0; rep < 20; ++rep) {
    const auto bag = bootstrap_sample(10, {}, c, rng);
    CHECK(std::accumulate(bag.begin(), bag.end(), 0U) == 6U);
    CHECK(*std::max_element(bag.begin(), bag.end()) == 1U);
  }
  c.replace = true;
  c.stratify = {2, 4, 1};
  c.sample_size = 7;
  for (int rep = 0; rep < 20; ++rep) {
    const auto bag = bootstrap_sample(10, labels, c, rng);
    std::vector<unsigned> per(3, 0);
    for (std::size_t i = 0; i < 10; ++i) per[static_cast<std::size_t>(labels[i])] += bag[i];
    CHECK(per == std::vector<unsigned>{2, 4, 1});
  }
}

TEST_CASE("out-of-bag fraction is 0.368 +- 0.02 at N=1000, 500 trees") {
  TrainConfig c;
  c.sample_size = 1000;
  std::size_t zeros = 0;
  for (std::uint64_t j = 0; j < 500; ++j) {
    SplitMix64 rng(stream_seed(11, j));
    const auto bag = bootstrap_sample(1000, {}, c, rng);
    zeros += static_cast<std::size_t>(std::count(bag.begin(), bag.end(), 0U));
  }
  const double frac = static_cast<double>(zeros) / (1000.0 * 500.0);
  CHECK(std::abs(frac - 0.368) <= 0.02);
}

TEST_CASE("config defaults and validation") {
  const Dataset reg = random_regression(30, 7, 1);
  const TrainConfig r = TrainConfig{}.resolved(reg);
  CHECK(r.mtry == 2);
  CHECK(r.min_node_size == 5);
  CHECK(r.sample_size == 30);
  const Dataset cls = random_classification(30, 1);
  TrainConfig cc;
  cc.task = Task::classification;
  const TrainConfig rc = cc.resolved(cls);
  CHECK(rc.mtry == 2);
  CHECK(rc.min_node_size == 1);

  TrainConfig bad;
  bad.mtry = 8;
  CHECK_THROWS_AS(bad.resolved(reg), ConfigError);
  bad = {};
  bad.task = Task::classification;
  CHECK_THROWS_AS(bad.resolved(reg), ConfigError);
  bad = {};
  bad.stratify = {1, 2};
  CHECK_THROWS_AS(bad.resolved(reg), ConfigError);
  bad = {};
  bad.replace = false;
  bad.sample_size = 31;
  CHECK_THROWS_AS(bad.resolved(reg), ConfigError);
  bad = {};
  bad.n_tree = 0;
  CHECK_THROWS_AS(bad.resolved(reg), ConfigError);

  std::vector<std::string> levels;
  std::vector<double> codes;
  for (int l = 1; l <= 17; ++l) {
    levels.push_back("L" + std::to_string(l));
    codes.push_back(l);
  }
  const Dataset wide = regression({categorical("g", levels, codes)}, std::vector<double>(17, 1.0));
  CHECK_THROWS_AS(TrainConfig{}.resolved(wide), ConfigError);

  const Dataset one = classification({numeric("a", {1, 2})}, {1, 1}, {"x", "y"});
  TrainConfig oc;
  oc.task = Task::classification;
  CHECK_THROWS_AS(oc.resolved(one), ConfigError);
}

TEST_CASE("weighted-mean law, normalization and in-bag counts on every node") {
  for (int task = 0; task < 2; ++task) {
    const Dataset d = task == 0 ? random_regression(200, 4, 2) : random_classification(200, 2);
    TrainConfig c;
    c.task = d.task;
    c.n_tree = 20;
    c.seed = 5;
    const NodeInvariants r = node_invariants(train_forest(d, c), d);
    CHECK(r.nodes > 20 * 10);
    CHECK(r.count_mismatches == 0);
    CHECK(r.weighted_mean <= 1e-9);
    CHECK(r.normalization <= 1e-12);
    CHECK(r.zero_sum <= 1e-12);
  }
}

TEST_CASE("every realized Gini split maximizes the weighted simplex-centre distance") {
  const Dataset d = random_classification(120, 4);
  TrainConfig c;
  c.task = Task::classification;
  c.n_tree = 5;
  c.seed = 8;
  const GiniRecheck r = gini_recheck(train_forest(d, c), d);
  CHECK(r.splits > 20);
  CHECK(r.not_optimal == 0);
  CHECK(r.identity <= 1e-12);
}

TEST_CASE("training is deterministic and schedule independent") {
  const Dataset d = random_regression(150, 3, 4);
  TrainConfig c;
  c.n_tree = 15;
  c.seed = 77;
  const ForestModel a = train_forest(d, c, Exec::serial);
  const ForestModel b = train_forest(d, c, Exec::parallel);
  const ForestModel again = train_forest(d, c, Exec::parallel);
  CHECK(a == b);
  CHECK(b == again);
  c.seed = 78;
  CHECK_FALSE(train_forest(d, c) == a);
}

TEST_CASE("root-only forest predicts the in-bag mean") {
  const Dataset d = regression({numeric("a", {1, 2, 3, 4})}, {1, 2, 3, 10});
  TrainConfig c;
  c.n_tree = 1;
  c.min_node_size = 100;
  const ForestModel m = train_forest(d, c);
  REQUIRE(m.trees[0].nodes.size() == 1);
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    s += m.bag_count(i, 0) * d.y[i];
    n += m.bag_count(i, 0);
  }
  const Predictions p = predict(m, d);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p.at(i) == doctest::Approx(s / n));
}

TEST_CASE("single-tree OOB predictions flag in-bag rows") {
  const Dataset d = random_regression(40, 2, 6);
  TrainConfig c;
  c.n_tree = 1;
  const ForestModel m = train_forest(d, c);
  const Predictions p = predict_oob(m, to_matrix(d));
  for (std::size_t i = 0; i < 40; ++i) CHECK(p.defined(i) == (m.bag_count(i, 0) == 0));
}

TEST_CASE("classification predictions are probability vectors") {
  const Dataset d = random_classification(150, 3);
  TrainConfig c;
  c.task = Task::classification;
  c.n_tree = 25;
  const ForestModel m = train_forest(d, c);
  const Predictions p = predict(m, d);
  for (std::size_t i = 0; i < p.n_rows; ++i) {
    double s = 0.0;
    for (double v : p.row(i)) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("prediction summaries") {
  Predictions p;
  p.n_rows = 3;
  p.n_outputs = 3;
  p.values = {0.5, 0.5, 0.0, 0.2, 0.3, 0.5, 0.0, 0.0, 0.0};
  p.tree_counts = {2, 2, 0};
  CHECK(majority_vote(p) == std::vector<int>{0, 2, -1});
  CHECK(error_rate(p, std::vector<int>{0, 1, 2}) == doctest::Approx(0.5));

  Predictions r;
  r.n_rows = 4;
  r.values = {1, 2, 3, 5};
  r.tree_counts = {1, 1, 1, 1};
  const std::vector<double> y{1, 2, 3, 4};
  // var(y) with n-1 = 5/3; MSE = 1/4.
  CHECK(explained_variance(r, y) == doctest::Approx(1.0 - 0.25 / (5.0 / 3.0)));
  CHECK(mean_absolute_error(r, y) == doctest::Approx(0.25));
}

TEST_CASE("query with the wrong width is rejected") {
  const Dataset d = random_regression(30, 2, 1);
  TrainConfig c;
  c.n_tree = 2;
  const ForestModel m = train_forest(d, c);
  FeatureMatrix x;
  x.n_rows = 1;
  x.n_cols = 3;
  x.data = {0, 0, 0};
  CHECK_THROWS_AS(predict(m, x), SchemaError);
  CHECK_THROWS_AS(predict_oob(m, x), SchemaError);
}
