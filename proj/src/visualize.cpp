#include "ffloor/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ffloor/errors.hpp"
#include "ffloor/pca.hpp"

namespace ffloor {

namespace {

std::uint8_t channel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

// Maps values to [0, 1] linearly between min and max; constant input -> 0.5.
std::vector<double> linear_positions(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.5);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

// Average rank (ties share the mean rank) scaled to [0, 1].
std::vector<double> rank_positions(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<double> out(n, 0.5);
  if (n < 2) return out;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    while (e + 1 < n && v[idx[e + 1]] == v[idx[s]]) ++e;
    const double rank = (static_cast<double>(s) + static_cast<double>(e)) / 2.0;
    for (std::size_t t = s; t <= e; ++t) out[idx[t]] = rank / static_cast<double>(n - 1);
    s = e + 1;
  }
  return out;
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

Rgb gradient_color(const ColorGradient& g, std::size_t row) {
  return row < g.colors.size() ? g.colors[row] : Rgb{0, 0, 0};
}

void check_feature(const ContributionMatrix& m, const FeatureMatrix& f, int feature) {
  if (f.n_rows != m.n_rows || f.n_cols != m.n_features)
    throw ConfigError("feature matrix does not match the contribution matrix");
  if (feature < 0 || static_cast<std::size_t>(feature) >= m.n_features)
    throw ConfigError("plot feature index out of range");
}

}  // namespace

Rgb palette_rgb(double t) {
  t = std::clamp(t, 0.0, 1.0);
  if (t <= 0.5) {
    const double u = t / 0.5;
    return {channel(lerp(255, 0, u)), channel(lerp(0, 255, u)), 0};
  }
  const double u = (t - 0.5) / 0.5;
  return {0, channel(lerp(255, 0, u)), channel(lerp(0, 255, u))};
}

Rgb class_color(int k) {
  static const Rgb kColors[] = {{0, 0, 0},     {220, 30, 30},  {30, 160, 50},
                                {40, 70, 220}, {200, 140, 0},  {150, 40, 180},
                                {0, 160, 170}, {120, 120, 120}};
  return kColors[static_cast<std::size_t>(k) % std::size(kColors)];
}

ColorGradient feature_gradient(const FeatureMatrix& features, int feature,
                               GradientMapping mapping) {
  if (feature < 0 || static_cast<std::size_t>(feature) >= features.n_cols)
    throw ConfigError("gradient feature index out of range");
  std::vector<double> v(features.n_rows);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = features.at(i, static_cast<std::size_t>(feature));
  ColorGradient g;
  g.source = GradientSource::feature;
  g.mapping = mapping;
  g.feature = feature;
  g.position = mapping == GradientMapping::rank ? rank_positions(v) : linear_positions(v);
  g.colors.reserve(v.size());
  for (double t : g.position) g.colors.push_back(palette_rgb(t));
  return g;
}

ColorGradient class_gradient(std::span<const int> labels) {
  ColorGradient g;
  g.source = GradientSource::class_label;
  g.colors.reserve(labels.size());
  for (int k : labels) g.colors.push_back(class_color(k));
  return g;
}

ColorGradient pca_gradient(const FeatureMatrix& features) {
  if (features.n_cols < 2)
    throw ConfigError("PCA gradient needs at least two features");
  const PcaResult pca = principal_components(features, {}, 2);
  ColorGradient g;
  g.source = GradientSource::pca2;
  std::vector<double> pc1(pca.n_rows);
  std::vector<double> pc2(pca.n_rows, 0.0);
  for (std::size_t i = 0; i < pca.n_rows; ++i) {
    pc1[i] = pca.score(i, 0);
    if (pca.n_components > 1) pc2[i] = pca.score(i, 1);
  }
  if (pca.n_components < 2) g.note = "rank-deficient input: single principal component used";
  g.position = linear_positions(pc1);
  const std::vector<double> lum =
      pca.n_components > 1 ? linear_positions(pc2) : std::vector<double>(pca.n_rows, 0.5);
  g.colors.reserve(pca.n_rows);
  for (std::size_t i = 0; i < pca.n_rows; ++i) {
    const Rgb base = palette_rgb(g.position[i]);
    const double v = lum[i];
    auto shade = [&](std::uint8_t c) {
      return v < 0.5 ? channel(c * (0.4 + 1.2 * v)) : channel(c + (255.0 - c) * (v - 0.5));
    };
    g.colors.push_back({shade(base.r), shade(base.g), shade(base.b)});
  }
  return g;
}

const char* to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::main_effect: return "main_effect";
    case PlotKind::interaction3d: return "interaction3d";
    case PlotKind::simplex: return "simplex";
    case PlotKind::aligned_class: return "aligned_class";
  }
  return "unknown";
}

PlotBundle main_effect_plot(const ContributionMatrix& contributions,
                            const FeatureMatrix& features, const Schema& schema,
                            int feature, const ColorGradient& gradient,
                            const PlotOptions& options) {
  check_feature(contributions, features, feature);
  const auto j = static_cast<std::size_t>(feature);
  const int k = contributions.n_outputs > 1 ? options.class_index : 0;
  PlotBundle b;
  b.kind = PlotKind::main_effect;
  b.features = {feature};
  b.x_label = schema.columns[j].name;
  b.y_label = "contribution";
  if (schema.task == Task::classification)
    b.y_label += " (" + schema.class_names[static_cast<std::size_t>(k)] + ")";
  b.title = schema.columns[j].name;
  std::vector<double> ys;
  for (std::size_t i = 0; i < contributions.n_rows; ++i) {
    if (!contributions.defined(i)) {
      ++b.omitted;
      continue;
    }
    PlotPoint p;
    p.x = features.at(i, j);
    p.y = contributions.feature(i, j, k);
    p.row = i;
    p.color = gradient_color(gradient, i);
    ys.push_back(p.y);
    b.points.push_back(p);
  }
  b.contribution_variance = sample_variance(ys);
  if (b.omitted) b.notes.push_back(std::to_string(b.omitted) + " undefined OOB rows omitted");
  if (options.with_gov) {
    GovRequest req = GovRequest::main_effect(feature);
    req.kernel = options.kernel;
    if (contributions.n_outputs > 1) req.class_index = k;
    const GovReport r = gov_score(contributions, features, req, options.exec);
    if (r.score && r.estimates.size() == b.points.size()) {
      b.gov = r.score;
      for (std::size_t t = 0; t < b.points.size(); ++t) {
        PlotPoint o = b.points[t];
        o.y = r.estimates[t];
        o.color = {90, 90, 90};
        b.overlay.push_back(o);
      }
    } else {
      b.notes.push_back("GOV unavailable: " + r.note);
    }
  }
  return b;
}

std::vector<PlotBundle> main_effect_plots(const ContributionMatrix& contributions,
                                          const FeatureMatrix& features,
                                          const Schema& schema,
                                          const ColorGradient& gradient,
                                          const PlotOptions& options) {
  std::vector<PlotBundle> out;
  for (std::size_t j = 0; j < contributions.n_features; ++j)
    out.push_back(main_effect_plot(contributions, features, schema,
                                   static_cast<int>(j), gradient, options));
  std::stable_sort(out.begin(), out.end(), [](const PlotBundle& a, const PlotBundle& b) {
    return a.contribution_variance > b.contribution_variance;
  });
  return out;
}

PlotBundle interaction_plot(const ContributionMatrix& contributions,
                            const FeatureMatrix& features, const Schema& schema,
                            int feature_a, int feature_b,
                            InteractionResponse response,
                            const ColorGradient& gradient,
                            const PlotOptions& options) {
  check_feature(contributions, features, feature_a);
  check_feature(contributions, features, feature_b);
  if (feature_a == feature_b) throw ConfigError("interaction plot needs two distinct features");
  const auto a = static_cast<std::size_t>(feature_a);
  const auto bcol = static_cast<std::size_t>(feature_b);
  const int k = contributions.n_outputs > 1 ? options.class_index : 0;
  PlotBundle b;
  b.kind = PlotKind::interaction3d;
  b.features = {feature_a, feature_b};
  b.x_label = schema.columns[a].name;
  b.y_label = schema.columns[bcol].name;
  b.z_label = response == InteractionResponse::summed
                  ? "contribution " + schema.columns[a].name + " + " + schema.columns[bcol].name
                  : "contribution " + schema.columns[a].name;
  b.title = schema.columns[a].name + " x " + schema.columns[bcol].name;
  std::vector<double> zs;
  for (std::size_t i = 0; i < contributions.n_rows; ++i) {
    if (!contributions.defined(i)) {
      ++b.omitted;
      continue;
    }
    PlotPoint p;
    p.x = features.at(i, a);
    p.y = features.at(i, bcol);
    p.z = contributions.feature(i, a, k);
    if (response == InteractionResponse::summed) p.z += contributions.feature(i, bcol, k);
    p.row = i;
    p.color = gradient_color(gradient, i);
    zs.push_back(p.z);
    b.points.push_back(p);
  }
  b.contribution_variance = sample_variance(zs);
  if (b.omitted) b.notes.push_back(std::to_string(b.omitted) + " undefined OOB rows omitted");
  if (options.with_gov) {
    GovRequest req;
    req.response_features = response == InteractionResponse::summed
                                ? std::vector<int>{feature_a, feature_b}
                                : std::vector<int>{feature_a};
    req.context = {feature_a, feature_b};
    req.kernel = options.kernel;
    if (contributions.n_outputs > 1) req.class_index = k;
    const GovReport r = gov_score(contributions, features, req, options.exec);
    if (r.score && r.estimates.size() == b.points.size()) {
      b.gov = r.score;
      for (std::size_t t = 0; t < b.points.size(); ++t) {
        PlotPoint o = b.points[t];
        o.z = r.estimates[t];
        o.color = {150, 150, 150};
        b.overlay.push_back(o);
      }
    } else {
      b.notes.push_back("GOV unavailable: " + r.note);
    }
  }
  return b;
}

std::array<double, 2> simplex_coords(std::span<const double> p) {
  if (p.size() != 3)
    throw UnsupportedError("simplex embedding supports exactly 3 classes, got " +
                           std::to_string(p.size()));
  const double sum = p[0] + p[1] + p[2];
  if (!std::isfinite(sum)) throw DataError("not a point of the probability simplex");
  if (p[0] < -1e-12 || p[1] < -1e-12 || p[2] < -1e-12 || std::abs(sum - 1.0) > 1e-9)
    throw DataError("not a point of the probability simplex");
  return {p[1] + 0.5 * p[2], p[2] * std::sqrt(3.0) / 2.0};
}

PlotBundle simplex_plot(const ContributionMatrix& contributions,
                        const Schema& schema, int feature,
                        const ColorGradient& gradient) {
  if (contributions.n_outputs != 3)
    throw UnsupportedError("simplex plots need a 3-class model, got " +
                           std::to_string(contributions.n_outputs) + " outputs");
  if (feature >= static_cast<int>(contributions.n_features))
    throw ConfigError("simplex feature index out of range");
  PlotBundle b;
  b.kind = PlotKind::simplex;
  if (feature >= 0) {
    b.features = {feature};
    b.title = schema.columns[static_cast<std::size_t>(feature)].name;
  } else {
    b.title = "prediction";
  }
  b.x_label = schema.class_names.size() == 3 ? schema.class_names[0] : "class 1";
  b.y_label = schema.class_names.size() == 3 ? schema.class_names[1] : "class 2";
  b.z_label = schema.class_names.size() == 3 ? schema.class_names[2] : "class 3";
  b.base_marker = simplex_coords(contributions.base_rate);
  for (int k = 0; k < 3 && static_cast<std::size_t>(k) < schema.class_names.size(); ++k)
    b.legend.emplace_back(schema.class_names[static_cast<std::size_t>(k)], class_color(k));

  for (std::size_t i = 0; i < contributions.n_rows; ++i) {
    if (!contributions.defined(i)) {
      ++b.omitted;
      continue;
    }
    std::array<double, 3> p{};
    for (int k = 0; k < 3; ++k) {
      double v = contributions.base_rate[static_cast<std::size_t>(k)];
      if (feature >= 0) {
        v += contributions.feature(i, static_cast<std::size_t>(feature), k);
      } else {
        for (std::size_t l = 0; l < contributions.n_columns(); ++l) v += contributions.at(i, l, k);
      }
      p[static_cast<std::size_t>(k)] = v;
    }
    bool clipped = false;
    double sum = 0.0;
    for (double& v : p) {
      if (v < 0.0) {
        if (v < -1e-12) clipped = true;
        v = 0.0;
      }
      sum += v;
    }
    if (clipped || std::abs(sum - 1.0) > 1e-9) {
      clipped = true;
      for (double& v : p) v /= sum;
    }
    if (clipped) ++b.clipped;
    const auto xy = simplex_coords(p);
    PlotPoint pt;
    pt.x = xy[0];
    pt.y = xy[1];
    pt.row = i;
    pt.color = gradient_color(gradient, i);
    b.points.push_back(pt);
  }
  if (b.clipped) b.notes.push_back(std::to_string(b.clipped) + " points clipped to the simplex");
  if (b.omitted) b.notes.push_back(std::to_string(b.omitted) + " undefined OOB rows omitted");
  return b;
}

PlotBundle aligned_class_plot(const ContributionMatrix& contributions,
                              const FeatureMatrix& features, const Schema& schema,
                              int feature) {
  check_feature(contributions, features, feature);
  if (schema.task != Task::classification)
    throw ConfigError("aligned class plots need a classification model");
  const auto j = static_cast<std::size_t>(feature);
  PlotBundle b;
  b.kind = PlotKind::aligned_class;
  b.features = {feature};
  b.title = schema.columns[j].name;
  b.x_label = schema.columns[j].name;
  b.y_label = "change of class probability";
  for (int k = 0; k < contributions.n_outputs; ++k)
    b.legend.emplace_back(schema.class_names[static_cast<std::size_t>(k)], class_color(k));
  std::vector<double> ys;
  for (std::size_t i = 0; i < contributions.n_rows; ++i) {
    if (!contributions.defined(i)) {
      ++b.omitted;
      continue;
    }
    for (int k = 0; k < contributions.n_outputs; ++k) {
      PlotPoint p;
      p.x = features.at(i, j);
      p.y = contributions.feature(i, j, k);
      p.row = i;
      p.series = k;
      p.color = class_color(k);
      ys.push_back(p.y);
      b.points.push_back(p);
    }
  }
  b.contribution_variance = sample_variance(ys);
  if (b.omitted) b.notes.push_back(std::to_string(b.omitted) + " undefined OOB rows omitted");
  return b;
}

}  // namespace ffloor
