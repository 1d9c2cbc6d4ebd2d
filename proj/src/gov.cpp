#include "ffloor/gov.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ffloor/errors.hpp"

namespace ffloor {

int default_neighbors(std::size_t n) {
  const auto root = static_cast<long>(std::lround(std::sqrt(static_cast<double>(n))));
  const long hi = static_cast<long>(n) - 1;
  return static_cast<int>(std::clamp(root, std::min(10L, hi), hi));
}

std::vector<double> loo_knn_estimate(const FeatureMatrix& context,
                                     std::span<const double> responses,
                                     const KernelConfig& kernel, Exec exec) {
  const std::size_t n = context.n_rows;
  const std::size_t m = context.n_cols;
  if (responses.size() != n)
    throw ConfigError("kernel estimate: responses and context differ in length");
  const int k_req = kernel.k > 0 ? kernel.k : default_neighbors(n);
  if (n < 2 || static_cast<std::size_t>(k_req) + 1 > n)
    throw ConfigError("kernel estimate needs N >= k + 1 (N=" + std::to_string(n) +
                      ", k=" + std::to_string(k_req) + ")");
  const auto k = static_cast<std::size_t>(k_req);

  bool varying = false;
  for (std::size_t i = 1; i < n && !varying; ++i)
    for (std::size_t c = 0; c < m; ++c)
      if (context.at(i, c) != context.at(0, c)) {
        varying = true;
        break;
      }
  if (!varying) throw DegenerateError("kernel context is constant over all rows");

  std::vector<double> out(n);
  auto query = [&](std::size_t i, std::vector<double>& dist,
                   std::vector<std::size_t>& idx) {
    const auto xi = context.row(i);
    double min_positive = std::numeric_limits<double>::infinity();
    idx.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto xj = context.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const double diff = xi[c] - xj[c];
        s += diff * diff;
      }
      dist[j] = std::sqrt(s);
      if (dist[j] > 0.0 && dist[j] < min_positive) min_positive = dist[j];
      idx.push_back(j);
    }
    auto closer = [&](std::size_t a, std::size_t b) {
      return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     idx.end(), closer);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), closer);
    double h = dist[idx[k - 1]];
    if (h == 0.0) h = min_positive;
    double sw = 0.0;
    double swy = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const double u = dist[idx[t]] / h;
      const double w = std::exp(-u * u);
      sw += w;
      swy += w * responses[idx[t]];
    }
    out[i] = swy / sw;
  };

  if (exec == Exec::serial) {
    std::vector<double> dist(n);
    std::vector<std::size_t> idx;
    idx.reserve(n);
    for (std::size_t i = 0; i < n; ++i) query(i, dist, idx);
  } else {
#pragma omp parallel num_threads(thread_count())
    {
      std::vector<double> dist(n);
      std::vector<std::size_t> idx;
      idx.reserve(n);
      const auto nn = static_cast<std::int64_t>(n);
#pragma omp for schedule(static)
      for (std::int64_t i = 0; i < nn; ++i) query(static_cast<std::size_t>(i), dist, idx);
    }
  }
  return out;
}

FeatureMatrix standardize_context(const FeatureMatrix& features,
                                  std::span<const int> columns,
                                  std::span<const std::size_t> rows) {
  FeatureMatrix ctx;
  ctx.n_rows = rows.size();
  ctx.n_cols = columns.size();
  ctx.data.assign(ctx.n_rows * ctx.n_cols, 0.0);
  bool any_varying = false;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto col = static_cast<std::size_t>(columns[c]);
    if (col >= features.n_cols) throw ConfigError("context column out of range");
    double mean = 0.0;
    for (std::size_t r : rows) mean += features.at(r, col);
    mean /= static_cast<double>(rows.size());
    double ss = 0.0;
    for (std::size_t r : rows) ss += (features.at(r, col) - mean) * (features.at(r, col) - mean);
    const double sd = rows.size() > 1 ? std::sqrt(ss / static_cast<double>(rows.size() - 1)) : 0.0;
    if (!(sd > 0.0)) continue;
    any_varying = true;
    for (std::size_t t = 0; t < rows.size(); ++t)
      ctx.data[t * ctx.n_cols + c] = (features.at(rows[t], col) - mean) / sd;
  }
  if (!any_varying) throw DegenerateError("every context column is constant");
  return ctx;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

namespace {

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

GovReport gov_single_class(const ContributionMatrix& contributions,
                           const FeatureMatrix& features, const GovRequest& request,
                           int class_index, Exec exec) {
  GovReport r;
  r.request = request;
  if (contributions.n_outputs > 1) r.request.class_index = class_index;
  for (std::size_t i = 0; i < contributions.n_rows; ++i)
    if (contributions.defined(i)) r.rows.push_back(i);
  if (contributions.n_undefined() > 0)
    r.note = std::to_string(contributions.n_undefined()) + " undefined rows excluded";
  r.responses.reserve(r.rows.size());
  for (std::size_t i : r.rows) {
    double v = 0.0;
    for (int f : request.response_features)
      v += contributions.feature(i, static_cast<std::size_t>(f), class_index);
    r.responses.push_back(v);
  }
  r.response_variance = variance(r.responses);
  try {
    const FeatureMatrix ctx = standardize_context(features, request.context, r.rows);
    r.estimates = loo_knn_estimate(ctx, r.responses, request.kernel, exec);
  } catch (const DegenerateError& e) {
    r.note = std::string("estimator degenerate: ") + e.what();
    return r;
  }
  r.residuals.resize(r.rows.size());
  for (std::size_t t = 0; t < r.rows.size(); ++t)
    r.residuals[t] = r.responses[t] - r.estimates[t];
  const double rho = pearson_correlation(r.estimates, r.responses);
  if (std::isnan(rho)) {
    r.note = "zero variance in contributions or estimates; score undefined";
  } else {
    r.score = rho * rho;
  }
  return r;
}

void check_request(const ContributionMatrix& m, const FeatureMatrix& features,
                   const GovRequest& req) {
  if (features.n_rows != m.n_rows || features.n_cols != m.n_features)
    throw ConfigError("feature matrix does not match the contribution matrix");
  if (req.response_features.empty() || req.context.empty())
    throw ConfigError("GOV request needs response features and a context");
  for (int f : req.response_features)
    if (f < 0 || static_cast<std::size_t>(f) >= m.n_features)
      throw ConfigError("GOV response feature out of range");
  for (int f : req.context)
    if (f < 0 || static_cast<std::size_t>(f) >= m.n_features)
      throw ConfigError("GOV context feature out of range");
  if (req.class_index && (*req.class_index < 0 || *req.class_index >= m.n_outputs))
    throw ConfigError("GOV class index out of range");
}

}  // namespace

GovReport gov_score(const ContributionMatrix& contributions,
                    const FeatureMatrix& features, const GovRequest& request,
                    Exec exec) {
  check_request(contributions, features, request);
  if (contributions.n_outputs == 1 || request.class_index)
    return gov_single_class(contributions, features, request,
                            request.class_index.value_or(0), exec);

  GovReport agg;
  agg.request = request;
  double wsum = 0.0;
  double acc = 0.0;
  for (int k = 0; k < contributions.n_outputs; ++k) {
    GovReport r = gov_single_class(contributions, features, request, k, exec);
    if (r.score) {
      acc += r.response_variance * *r.score;
      wsum += r.response_variance;
    }
    agg.rows = r.rows;
    agg.per_class.push_back(std::move(r));
  }
  if (wsum > 0.0) {
    agg.score = acc / wsum;
  } else {
    agg.note = "no class has a defined score";
  }
  return agg;
}

std::vector<GovReport> main_effect_gov_all(const ContributionMatrix& contributions,
                                           const FeatureMatrix& features,
                                           const KernelConfig& kernel, Exec exec) {
  std::vector<GovReport> out;
  for (std::size_t j = 0; j < contributions.n_features; ++j) {
    GovRequest req = GovRequest::main_effect(static_cast<int>(j));
    req.kernel = kernel;
    out.push_back(gov_score(contributions, features, req, exec));
  }
  return out;
}

namespace {

std::string names_of(const std::vector<int>& cols, const Schema& schema,
                     const char* sep) {
  std::string s;
  for (std::size_t t = 0; t < cols.size(); ++t) {
    if (t) s += sep;
    s += schema.columns[static_cast<std::size_t>(cols[t])].name;
  }
  return s;
}

std::string score_text(const std::optional<double>& s) {
  if (!s) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *s);
  return buf;
}

}  // namespace

std::string gov_table(const std::vector<GovReport>& reports, const Schema& schema) {
  std::string out = "response | context | gov\n";
  for (const auto& r : reports) {
    out += names_of(r.request.response_features, schema, "+") + " | " +
           names_of(r.request.context, schema, ",") + " | " + score_text(r.score);
    if (!r.per_class.empty()) {
      out += " (";
      for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        if (k) out += ", ";
        out += schema.class_names[k] + ": " + score_text(r.per_class[k].score);
      }
      out += ")";
    }
    if (!r.note.empty()) out += "  # " + r.note;
    out += '\n';
  }
  return out;
}

std::string gov_json(const std::vector<GovReport>& reports, const Schema& schema) {
  using nlohmann::json;
  json arr = json::array();
  auto names = [&](const std::vector<int>& cols) {
    std::vector<std::string> v;
    for (int c : cols) v.push_back(schema.columns[static_cast<std::size_t>(c)].name);
    return v;
  };
  for (const auto& r : reports) {
    json j;
    j["response"] = names(r.request.response_features);
    j["context"] = names(r.request.context);
    j["gov"] = r.score ? json(*r.score) : json(nullptr);
    j["rows_used"] = r.rows.size();
    if (r.request.class_index) j["class"] = schema.class_names[static_cast<std::size_t>(*r.request.class_index)];
    if (!r.per_class.empty()) {
      json pc = json::object();
      for (std::size_t k = 0; k < r.per_class.size(); ++k)
        pc[schema.class_names[k]] =
            r.per_class[k].score ? json(*r.per_class[k].score) : json(nullptr);
      j["per_class"] = pc;
    }
    if (!r.note.empty()) j["note"] = r.note;
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace ffloor
