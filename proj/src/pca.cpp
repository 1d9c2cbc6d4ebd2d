#include "ffloor/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "ffloor/errors.hpp"

namespace ffloor {

PcaResult principal_components(const FeatureMatrix& features,
                               std::span<const int> columns,
                               std::size_t max_components) {
  std::vector<int> cols(columns.begin(), columns.end());
  if (cols.empty()) {
    cols.resize(features.n_cols);
    std::iota(cols.begin(), cols.end(), 0);
  }
  const auto n = static_cast<Eigen::Index>(features.n_rows);
  const auto m = static_cast<Eigen::Index>(cols.size());
  if (n < 2 || m < 1) throw DegenerateError("PCA needs at least two rows and one column");

  Eigen::MatrixXd z(n, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      z(i, c) = features.at(static_cast<std::size_t>(i), static_cast<std::size_t>(cols[static_cast<std::size_t>(c)]));
    const double mean = z.col(c).mean();
    z.col(c).array() -= mean;
    const double sd = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(n - 1));
    if (sd > 0) z.col(c) /= sd;
  }
  const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DegenerateError("PCA eigensolver failed");

  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd evals = solver.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();
  const double total = std::max(evals.sum(), 0.0);
  const double tol = 1e-10 * std::max(1.0, total);

  std::size_t nonzero = 0;
  for (Eigen::Index c = 0; c < m; ++c)
    if (evals(c) > tol) ++nonzero;
  if (nonzero == 0) throw DegenerateError("PCA input has no variance");

  PcaResult r;
  r.n_rows = features.n_rows;
  r.n_components = std::min<std::size_t>({max_components, nonzero, static_cast<std::size_t>(m)});
  r.rank_deficient = r.n_components < std::min<std::size_t>(max_components, static_cast<std::size_t>(m));
  for (std::size_t c = 0; c < r.n_components; ++c) {
    Eigen::VectorXd v = evecs.col(static_cast<Eigen::Index>(c));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.loadings.emplace_back(v.data(), v.data() + v.size());
    r.variances.push_back(evals(static_cast<Eigen::Index>(c)));
    r.explained.push_back(total > 0 ? evals(static_cast<Eigen::Index>(c)) / total : 0.0);
  }
  r.scores.assign(r.n_rows * r.n_components, 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t c = 0; c < r.n_components; ++c) {
      double s = 0.0;
      for (Eigen::Index t = 0; t < m; ++t) s += z(i, t) * r.loadings[c][static_cast<std::size_t>(t)];
      r.scores[static_cast<std::size_t>(i) * r.n_components + c] = s;
    }
  return r;
}

}  // namespace ffloor
