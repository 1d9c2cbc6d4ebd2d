#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ffloor/baselines.hpp"
#include "ffloor/errors.hpp"
#include "helpers.hpp"

using namespace ffloor;
using namespace fft;

namespace {

Dataset mixed_data(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Dataset d;
  d.columns.push_back(numeric("a", {}));
  d.columns.push_back(numeric("b", {}));
  d.columns.push_back(categorical("g", {"u", "v", "w"}, {}));
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    const auto g = static_cast<double>(1 + rng.below(3));
    d.columns[0].values.push_back(a);
    d.columns[1].values.push_back(b);
    d.columns[2].values.push_back(g);
    d.y.push_back(a * a + b + (g == 2 ? 1.0 : 0.0) + 0.05 * rng.normal());
  }
  d.validate();
  return d;
}

ForestModel fit(const Dataset& d) {
  TrainConfig c;
  c.n_tree = 25;
  c.seed = 3;
  return train_forest(d, c);
}

}  // namespace

TEST_CASE("default grids") {
  const Dataset small = regression({numeric("a", {3, 1, 2, 2, 1}),
                                    categorical("g", {"u", "v", "w"}, {1, 1, 1, 2, 2})},
                                   {0, 0, 0, 0, 0});
  const GridSpec g = default_grid(small, {0});
  CHECK(g.values[0] == std::vector<double>{1, 2, 3});
  const GridSpec cat = default_grid(small, {1});
  CHECK(cat.values[0] == std::vector<double>{1, 2, 3});  // every level, seen or not

  std::vector<double> many(101);
  for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<double>(i);
  const Dataset wide = regression({numeric("a", many)}, std::vector<double>(101, 0.0));
  const GridSpec q = default_grid(wide, {0}, 11);
  CHECK(q.values[0] == std::vector<double>{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
  CHECK(default_grid(wide, {0}).values[0].size() == 50);
  CHECK_THROWS_AS(default_grid(wide, {1}), ConfigError);
}

TEST_CASE("two-feature grids enumerate the first feature outermost") {
  GridSpec g;
  g.features = {0, 1};
  g.values = {{1, 2}, {10, 20, 30}};
  CHECK(g.n_points() == 6);
  CHECK(g.point(0) == std::vector<double>{1, 10});
  CHECK(g.point(2) == std::vector<double>{1, 30});
  CHECK(g.point(3) == std::vector<double>{2, 10});
  CHECK(g.point(5) == std::vector<double>{2, 30});
}

TEST_CASE("grid validation") {
  const Dataset d = mixed_data(20, 1);
  GridSpec g;
  g.features = {2};
  g.values = {{0}};
  CHECK_THROWS_AS(g.validate(d), ConfigError);
  g.values = {{1.5}};
  CHECK_THROWS_AS(g.validate(d), ConfigError);
  g.values = {{3}};
  CHECK_NOTHROW(g.validate(d));
  g.features = {0, 0};
  g.values = {{1}, {1}};
  CHECK_THROWS_AS(g.validate(d), ConfigError);
  g.features = {0, 1, 2};
  g.values = {{1}, {1}, {1}};
  CHECK_THROWS_AS(g.validate(d), ConfigError);
}

TEST_CASE("centroid uses means and the lowest modal level") {
  const Dataset d = regression({numeric("a", {1, 2, 6}),
                                categorical("g", {"u", "v", "w"}, {3, 2, 3})},
                               {0, 0, 0});
  CHECK(centroid(d) == std::vector<double>{3, 3});
  const Dataset tie = regression({categorical("g", {"u", "v", "w"}, {3, 2, 2, 3})},
                                 {0, 0, 0, 0});
  CHECK(centroid(tie) == std::vector<double>{2});
}

TEST_CASE("ICE cells equal predictions on the modified rows") {
  const Dataset d = mixed_data(60, 2);
  const ForestModel m = fit(d);
  for (const std::vector<int>& feats : {std::vector<int>{0}, std::vector<int>{2},
                                        std::vector<int>{0, 2}}) {
    const GridSpec g = default_grid(d, feats, 7);
    const IceTable ice = ice_curves(m, d, g, false);
    std::vector<double> out(1);
    for (std::size_t i = 0; i < d.n_rows(); ++i)
      for (std::size_t p = 0; p < g.n_points(); ++p) {
        auto x = d.row(i);
        const auto pt = g.point(p);
        for (std::size_t f = 0; f < feats.size(); ++f)
          x[static_cast<std::size_t>(feats[f])] = pt[f];
        predict_row(m, x, out);
        REQUIRE(ice.at(i, p) == out[0]);
      }
  }
}

TEST_CASE("PD is the mean of ICE and SA is the centroid's ICE, exactly") {
  const Dataset d = mixed_data(80, 3);
  const ForestModel m = fit(d);
  const GridSpec g = default_grid(d, {1});
  const IceTable ice = ice_curves(m, d, g, false);
  CHECK(partial_dependence(m, d, g).values == average_curves(ice).values);

  Dataset centre = d;
  const auto c = centroid(d);
  for (std::size_t j = 0; j < centre.columns.size(); ++j) centre.columns[j].values = {c[j]};
  centre.y = {0.0};
  CHECK(sensitivity_analysis(m, d, g).values == ice_curves(m, centre, g, false).values);
}

TEST_CASE("centred ICE starts at zero and keeps curve shapes") {
  const Dataset d = mixed_data(40, 4);
  const ForestModel m = fit(d);
  const GridSpec g = default_grid(d, {0}, 9);
  const IceTable raw = ice_curves(m, d, g, false);
  const IceTable cen = ice_curves(m, d, g, true);
  CHECK(cen.centered);
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    CHECK(cen.at(i, 0) == 0.0);
    for (std::size_t p = 0; p < g.n_points(); ++p)
      CHECK(cen.at(i, p) == doctest::Approx(raw.at(i, p) - raw.at(i, 0)).epsilon(1e-14));
  }
}

TEST_CASE("classification curves are probability vectors") {
  const Dataset d = random_classification(90, 5);
  TrainConfig c;
  c.task = Task::classification;
  c.n_tree = 15;
  const ForestModel m = train_forest(d, c);
  const CurveTable pd = partial_dependence(m, d, default_grid(d, {3}));
  CHECK(pd.n_outputs == 3);
  for (std::size_t p = 0; p < pd.grid.n_points(); ++p)
    CHECK(pd.at(p, 0) + pd.at(p, 1) + pd.at(p, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("curve CSV layout") {
  const Dataset d = mixed_data(30, 6);
  const ForestModel m = fit(d);
  const GridSpec g = default_grid(d, {0, 2}, 3);
  const auto dir = std::filesystem::temp_directory_path() / "ff_baseline_test";
  std::filesystem::create_directories(dir);
  write_curve_csv(partial_dependence(m, d, g), d, "pd", (dir / "pd.csv").string());
  std::ifstream in(dir / "pd.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "a,g,row_id,prediction");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == g.n_points());
}
