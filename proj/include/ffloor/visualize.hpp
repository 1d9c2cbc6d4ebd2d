#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ffloor/decompose.hpp"
#include "ffloor/gov.hpp"

namespace ffloor {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

// Red (t = 0) -> green (0.5) -> blue (1), linear in between.
Rgb palette_rgb(double t);
// Fixed class palette: black, red, green, blue, then repeating hues.
Rgb class_color(int k);

enum class GradientSource { feature, pca2, class_label };
enum class GradientMapping { linear, rank };

// One colour per row. `position` is the palette coordinate in [0, 1] used
// for feature gradients (empty for class colouring).
struct ColorGradient {
  GradientSource source = GradientSource::feature;
  GradientMapping mapping = GradientMapping::linear;
  int feature = -1;
  std::vector<double> position;
  std::vector<Rgb> colors;
  std::string note;
};

ColorGradient feature_gradient(const FeatureMatrix& features, int feature,
                               GradientMapping mapping = GradientMapping::linear);
ColorGradient class_gradient(std::span<const int> labels);
// z-scored features -> first two principal components; PC1 picks the hue,
// PC2 the luminance. Falls back to a single component with a note when the
// data has rank one. Requires at least two features.
ColorGradient pca_gradient(const FeatureMatrix& features);

enum class PlotKind { main_effect, interaction3d, simplex, aligned_class };
const char* to_string(PlotKind kind);

struct PlotPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  Rgb color;
  std::size_t row = 0;
  int series = 0;
};

struct PlotBundle {
  PlotKind kind = PlotKind::main_effect;
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string z_label;
  std::vector<PlotPoint> points;
  // GOV estimator evaluated at every plotted row; present iff GOV was
  // requested and defined.
  std::vector<PlotPoint> overlay;
  std::optional<double> gov;
  std::optional<std::array<double, 2>> base_marker;
  std::size_t clipped = 0;
  std::size_t omitted = 0;  // undefined OOB rows left out
  std::vector<std::pair<std::string, Rgb>> legend;
  std::vector<std::string> notes;
  std::vector<int> features;
  double contribution_variance = 0.0;
};

struct PlotOptions {
  bool with_gov = true;
  int class_index = 0;  // classification main-effect / interaction response
  KernelConfig kernel;
  Exec exec = Exec::parallel;
};

// x = values of column j, y = its contributions.
PlotBundle main_effect_plot(const ContributionMatrix& contributions,
                            const FeatureMatrix& features, const Schema& schema,
                            int feature, const ColorGradient& gradient,
                            const PlotOptions& options = {});

// One bundle per feature, sorted by contribution variance, largest first.
std::vector<PlotBundle> main_effect_plots(const ContributionMatrix& contributions,
                                          const FeatureMatrix& features,
                                          const Schema& schema,
                                          const ColorGradient& gradient,
                                          const PlotOptions& options = {});

enum class InteractionResponse { first, summed };

// x = column a, y = column b, z = F_a or F_a + F_b; GOV context {a, b}.
PlotBundle interaction_plot(const ContributionMatrix& contributions,
                            const FeatureMatrix& features, const Schema& schema,
                            int feature_a, int feature_b,
                            InteractionResponse response,
                            const ColorGradient& gradient,
                            const PlotOptions& options = {});

// Barycentric embedding of a 3-class probability vector with vertices
// (0,0), (1,0), (1/2, sqrt(3)/2).
std::array<double, 2> simplex_coords(std::span<const double> p);

// Simplex of base_rate + F_l for column `feature`, or of the full
// prediction base_rate + sum_l F_l when feature < 0. Points leaving the
// simplex are clipped and counted. Requires K = 3.
PlotBundle simplex_plot(const ContributionMatrix& contributions,
                        const Schema& schema, int feature,
                        const ColorGradient& gradient);

// Every row K times: x = value of column j, y = F_jk, colour = class k.
PlotBundle aligned_class_plot(const ContributionMatrix& contributions,
                              const FeatureMatrix& features, const Schema& schema,
                              int feature);

struct SvgOptions {
  int width = 640;
  int height = 480;
  double azimuth_deg = 35.0;   // 3D bundles only
  double elevation_deg = 25.0;
};

std::string render_svg_string(const PlotBundle& bundle, const SvgOptions& options = {});
void render_svg(const PlotBundle& bundle, const std::string& path,
                const SvgOptions& options = {});
// Point table: row_id, series, x, y, z, r, g, b, fit.
void write_bundle_csv(const PlotBundle& bundle, const std::string& path);

}  // namespace ffloor
