#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ffloor/dataset.hpp"
#include "ffloor/forest.hpp"

namespace ffloor {

// One or two varied features with their grid values. Two-feature grids are
// the Cartesian product, first feature outermost.
struct GridSpec {
  std::vector<int> features;
  std::vector<std::vector<double>> values;

  std::size_t n_points() const;
  // Grid point p as one value per varied feature.
  std::vector<double> point(std::size_t p) const;
  void validate(const Dataset& data) const;
};

// Sorted unique observed values, reduced to at most `max_points` quantile
// points. Categorical features use every level.
GridSpec default_grid(const Dataset& data, std::vector<int> features,
                      std::size_t max_points = 50);

// Numeric mean for numeric columns, mode (lowest code on ties) for
// categorical ones.
std::vector<double> centroid(const Dataset& data);

// Grid predictions: values[p * n_outputs + k].
struct CurveTable {
  GridSpec grid;
  int n_outputs = 1;
  std::vector<double> values;
  double at(std::size_t p, int k = 0) const {
    return values[p * static_cast<std::size_t>(n_outputs) + static_cast<std::size_t>(k)];
  }
};

// One curve per row: values[(i * n_points + p) * n_outputs + k].
struct IceTable {
  GridSpec grid;
  std::size_t n_rows = 0;
  int n_outputs = 1;
  bool centered = false;
  std::vector<double> values;
  double at(std::size_t i, std::size_t p, int k = 0) const {
    return values[(i * grid.n_points() + p) * static_cast<std::size_t>(n_outputs) +
                  static_cast<std::size_t>(k)];
  }
};

// Predictions along the grid with every other feature held at the centroid.
CurveTable sensitivity_analysis(const ForestModel& model, const Dataset& data,
                                const GridSpec& grid, Exec exec = Exec::parallel);

// For each grid point, the mean prediction over all rows with the varied
// features overwritten. Computed as the row-order mean of the uncentered ICE
// curves, so partial_dependence == mean(ice_curves) exactly.
CurveTable partial_dependence(const ForestModel& model, const Dataset& data,
                              const GridSpec& grid, Exec exec = Exec::parallel);

// centered=true subtracts each curve's value at the first (smallest) grid
// point.
IceTable ice_curves(const ForestModel& model, const Dataset& data,
                    const GridSpec& grid, bool centered, Exec exec = Exec::parallel);

// Mean over rows of an ICE table, row order ascending.
CurveTable average_curves(const IceTable& ice);

// CSV: grid columns..., row_id ("PD", "SA" or the row index), one column per
// output.
void write_curve_csv(const CurveTable& t, const Dataset& data,
                     const std::string& label, const std::string& path);
void write_ice_csv(const IceTable& t, const Dataset& data, const std::string& path);

}  // namespace ffloor
