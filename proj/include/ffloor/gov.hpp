#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffloor/dataset.hpp"
#include "ffloor/decompose.hpp"
#include "ffloor/parallel.hpp"

namespace ffloor {

struct KernelConfig {
  int k = 0;  // 0: clamp(round(sqrt(N)), 10, N - 1)
};

int default_neighbors(std::size_t n);

// Leave-one-out k-nearest-neighbour Gaussian kernel regression. For each row
// i the k nearest other rows (Euclidean in `context`, distance ties broken by
// row index) are weighted by exp(-(dist / h_i)^2), with h_i the distance to
// the k-th neighbour (or the smallest positive distance from i when that is
// zero). Row i's own response never enters its estimate.
// `context` is expected to be standardized already.
std::vector<double> loo_knn_estimate(const FeatureMatrix& context,
                                     std::span<const double> responses,
                                     const KernelConfig& kernel,
                                     Exec exec = Exec::parallel);

// z-scores the given columns of `features` over the listed rows. Constant
// columns become zero; if every column is constant DegenerateError is thrown.
FeatureMatrix standardize_context(const FeatureMatrix& features,
                                  std::span<const int> columns,
                                  std::span<const std::size_t> rows);

struct GovRequest {
  // Dataset columns whose contributions are summed into the response;
  // a single entry for a main-effect plot.
  std::vector<int> response_features;
  // Dataset columns the estimator sees (lambda).
  std::vector<int> context;
  // Classification: class whose contribution is the response. Unset means
  // one report per class plus their variance-weighted mean.
  std::optional<int> class_index;
  KernelConfig kernel;

  static GovRequest main_effect(int feature) {
    return GovRequest{{feature}, {feature}, std::nullopt, {}};
  }
};

struct GovReport {
  GovRequest request;
  std::optional<double> score;  // squared Pearson correlation; unset if undefined
  std::vector<std::size_t> rows;  // defined rows used
  std::vector<double> responses;
  std::vector<double> estimates;
  std::vector<double> residuals;
  double response_variance = 0.0;
  std::string note;
  std::vector<GovReport> per_class;  // classification without class_index
};

GovReport gov_score(const ContributionMatrix& contributions,
                    const FeatureMatrix& features, const GovRequest& request,
                    Exec exec = Exec::parallel);

// One main-effect report per feature (lambda = {l}).
std::vector<GovReport> main_effect_gov_all(const ContributionMatrix& contributions,
                                           const FeatureMatrix& features,
                                           const KernelConfig& kernel = {},
                                           Exec exec = Exec::parallel);

// Plain-text table, one line per report.
std::string gov_table(const std::vector<GovReport>& reports, const Schema& schema);
std::string gov_json(const std::vector<GovReport>& reports, const Schema& schema);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace ffloor
