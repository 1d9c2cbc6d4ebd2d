#include "ffloor/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ffloor/baselines.hpp"
#include "ffloor/data_io.hpp"
#include "ffloor/decompose.hpp"
#include "ffloor/errors.hpp"
#include "ffloor/forest.hpp"
#include "ffloor/gov.hpp"
#include "ffloor/parallel.hpp"
#include "ffloor/visualize.hpp"

namespace ffloor {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool ReproResult::all_pass() const {
  return !skipped && std::all_of(checks.begin(), checks.end(),
                                 [](const Check& c) { return c.pass; });
}

double centered_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("curves differ in length");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i] - ma) - (b[i] - mb);
    ss += d * d;
  }
  return std::sqrt(ss / n);
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (xs.empty() || xs.size() != ys.size()) throw ConfigError("bad interpolation table");
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

namespace {

using Clock = std::chrono::steady_clock;

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Collects outputs, inputs and timings. The manifest holds only
// deterministic content; wall-clock timings go to a sidecar file.
class Manifest {
 public:
  Manifest(std::string command, fs::path dir, std::string name)
      : dir_(std::move(dir)), name_(std::move(name)) {
    body_["command"] = std::move(command);
  }
  json& body() { return body_; }
  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& rel) const { return dir_ / rel; }
  void input(const std::string& p) {
    inputs_.push_back({{"path", p}, {"fnv1a64", hex64(file_hash(p))}});
  }
  void output(const std::string& rel) { outputs_.push_back(rel); }
  void time(const std::string& stage, Clock::time_point start) {
    timings_[stage] = std::chrono::duration<double>(Clock::now() - start).count();
  }
  std::vector<std::string> write() {
    const std::string timings_name = stem() + "timings.json";
    {
      std::ofstream t(dir_ / timings_name);
      t << timings_.dump(2) << '\n';
      if (!t) throw IoError("cannot write timings in '" + dir_.string() + "'");
    }
    json outs = json::array();
    for (const auto& rel : outputs_)
      outs.push_back({{"file", rel}, {"fnv1a64", hex64(file_hash((dir_ / rel).string()))}});
    outs.push_back({{"file", timings_name}, {"fnv1a64", nullptr}, {"volatile", true}});
    body_["inputs"] = inputs_;
    body_["outputs"] = outs;
    std::ofstream m(dir_ / name_);
    m << body_.dump(2) << '\n';
    if (!m) throw IoError("cannot write manifest in '" + dir_.string() + "'");
    auto files = outputs_;
    files.push_back(timings_name);
    files.push_back(name_);
    return files;
  }

 private:
  std::string stem() const {
    const std::string suffix = "manifest.json";
    return name_.size() > suffix.size() ? name_.substr(0, name_.size() - suffix.size()) : "";
  }
  fs::path dir_;
  std::string name_;
  json body_ = json::object();
  json inputs_ = json::array();
  json timings_ = json::object();
  std::vector<std::string> outputs_;
};

// Manifest sitting beside a single output file: "<file>.manifest.json".
Manifest file_manifest(const std::string& command, const std::string& out) {
  const fs::path p(out);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!dir.empty()) fs::create_directories(dir);
  return Manifest(command, dir, p.filename().string() + ".manifest.json");
}

json config_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)}, {"n_tree", c.n_tree},
          {"mtry", c.mtry},            {"sample_size", c.sample_size},
          {"replace", c.replace},      {"stratify", c.stratify},
          {"min_node_size", c.min_node_size}, {"seed", c.seed}};
}

json checks_json(const std::vector<Check>& checks) {
  json a = json::array();
  for (const auto& c : checks)
    a.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"threshold", c.detail}});
  return a;
}

Check at_least(const std::string& name, std::optional<double> v, double lo) {
  return {name, v && *v >= lo, v.value_or(std::nan("")), ">= " + fmt(lo)};
}
Check at_most(const std::string& name, std::optional<double> v, double hi) {
  return {name, v && *v <= hi, v.value_or(std::nan("")), "<= " + fmt(hi)};
}
Check within(const std::string& name, double v, double target, double tol) {
  return {name, std::abs(v - target) <= tol, v, fmt(target) + " +- " + fmt(tol)};
}

// Query data read against a model schema: columns reordered and recoded,
// labels remapped by class name.
Dataset conform(const Dataset& raw, const Schema& schema) {
  const FeatureMatrix x = align_to_schema(raw, schema);
  Dataset d;
  d.task = schema.task;
  d.target_name = schema.target_name;
  d.class_names = schema.class_names;
  for (std::size_t j = 0; j < schema.n_features(); ++j) {
    FeatureColumn c;
    c.meta = schema.columns[j];
    c.values.resize(x.n_rows);
    for (std::size_t i = 0; i < x.n_rows; ++i) c.values[i] = x.at(i, j);
    d.columns.push_back(std::move(c));
  }
  if (schema.task == Task::regression) {
    d.y = raw.y;
  } else {
    std::vector<int> map(raw.class_names.size(), -1);
    for (std::size_t k = 0; k < raw.class_names.size(); ++k) {
      const auto it = std::find(schema.class_names.begin(), schema.class_names.end(),
                                raw.class_names[k]);
      if (it == schema.class_names.end())
        throw SchemaError("class '" + raw.class_names[k] + "' unknown to the model");
      map[k] = static_cast<int>(it - schema.class_names.begin());
    }
    d.labels.resize(raw.labels.size());
    for (std::size_t i = 0; i < raw.labels.size(); ++i)
      d.labels[i] = map[static_cast<std::size_t>(raw.labels[i])];
  }
  return d;
}

Dataset load_for_model(const std::string& path, const Schema& schema, char delimiter) {
  CsvOptions o;
  o.target = schema.target_name;
  o.task = schema.task;
  o.delimiter = delimiter;
  for (const auto& c : schema.columns)
    if (c.categorical()) o.categorical.push_back(c.name);
  return conform(load_csv(path, o), schema);
}

int feature_or_throw(const Schema& s, const std::string& name) {
  const int j = s.feature_index(name);
  if (j < 0) throw ConfigError("unknown feature '" + name + "'");
  return j;
}

ContributionMatrix contributions_for(const ForestModel& model, const FeatureMatrix& x, bool oob) {
  if (oob) {
    if (x.n_rows != model.n_train)
      throw ConfigError("--oob needs the training data the model was fit on");
    return oob_feature_contributions(model, x);
  }
  return feature_contributions(model, x);
}

ColorGradient parse_gradient(const std::string& spec, const Dataset& data,
                             const FeatureMatrix& x, bool rank) {
  if (spec.empty() || spec == "none") return {};
  if (spec == "pca") return pca_gradient(x);
  if (spec == "class") {
    if (data.task != Task::classification)
      throw ConfigError("--color-by class needs a classification model");
    return class_gradient(data.labels);
  }
  if (spec.rfind("feature:", 0) == 0)
    return feature_gradient(x, feature_or_throw(data.schema(), spec.substr(8)),
                            rank ? GradientMapping::rank : GradientMapping::linear);
  throw ConfigError("--color-by expects feature:NAME, pca or class");
}

// Writes <name>.svg and <name>.csv and records them in the manifest.
json emit_bundle(Manifest& m, const PlotBundle& b, const std::string& name,
                 const SvgOptions& svg = {}) {
  render_svg(b, m.path(name + ".svg").string(), svg);
  write_bundle_csv(b, m.path(name + ".csv").string());
  m.output(name + ".svg");
  m.output(name + ".csv");
  return {{"file", name + ".svg"}, {"kind", to_string(b.kind)}, {"title", b.title},
          {"gov", opt_json(b.gov)}, {"clipped", b.clipped}, {"omitted", b.omitted}};
}

void finish_repro(Manifest& m, ReproResult& r) {
  std::ofstream c(m.path("checks.json"));
  c << json({{"checks", checks_json(r.checks)}, {"metrics", r.metrics},
             {"all_pass", r.all_pass()}})
           .dump(2)
    << '\n';
  if (!c) throw IoError("cannot write checks.json");
  c.close();
  m.output("checks.json");
  m.body()["checks"] = checks_json(r.checks);
  m.body()["all_pass"] = r.all_pass();
  r.files = m.write();
}

std::string resolve_data_dir(const ReproOptions& o) {
  if (!o.data_dir.empty()) return o.data_dir;
  if (const char* env = std::getenv("FF_DATA_DIR")) return env;
  return "data";
}

// Sorted main-effect plots for every feature plus a GOV table.
json main_effect_section(Manifest& m, const ContributionMatrix& f, const FeatureMatrix& x,
                         const Schema& schema, const ColorGradient& gradient,
                         const PlotOptions& opts) {
  json plots = json::array();
  const auto bundles = main_effect_plots(f, x, schema, gradient, opts);
  for (std::size_t r = 0; r < bundles.size(); ++r) {
    const int j = bundles[r].features.front();
    plots.push_back(emit_bundle(
        m, bundles[r],
        "main_" + std::to_string(r + 1) + "_" + slug(schema.columns[static_cast<std::size_t>(j)].name)));
  }
  return plots;
}

void write_text(Manifest& m, const std::string& rel, const std::string& text) {
  std::ofstream o(m.path(rel));
  o << text;
  if (!o) throw IoError("cannot write '" + rel + "'");
  m.output(rel);
}

}  // namespace

// ---------------------------------------------------------------------------
// Reproduction studies

ReproResult repro_toy(const ReproOptions& o) {
  ReproResult r;
  fs::create_directories(o.out_dir);
  Manifest m("repro toy", o.out_dir, "manifest.json");
  auto t0 = Clock::now();

  ToyConfig tc;
  tc.n = o.n;
  tc.seed = o.seed;
  const ToyData toy = simulate_toy(tc);
  const Dataset& data = toy.data;
  write_csv(data, m.path("data.csv").string());
  m.output("data.csv");
  m.time("simulate", t0);

  t0 = Clock::now();
  TrainConfig cfg;
  cfg.n_tree = o.n_tree;
  cfg.seed = o.seed;
  const ForestModel model = train_forest(data, cfg);
  m.time("train", t0);
  m.body()["config"] = {{"n", o.n}, {"seed", o.seed}, {"rho", tc.rho},
                        {"noise_scale", toy.noise_scale},
                        {"realized_correlation", toy.realized_correlation},
                        {"forest", config_json(model.config.resolved(data))}};
  m.body()["seed"] = o.seed;

  t0 = Clock::now();
  const FeatureMatrix x = to_matrix(data);
  const Schema schema = data.schema();
  const ContributionMatrix plain = feature_contributions(model, x);
  const ContributionMatrix oob = oob_feature_contributions(model, x);
  const auto rp = verify_decomposition(model, plain, predict(model, x), Variant::plain);
  const Predictions po = predict_oob(model, x);
  const auto ro = verify_decomposition(model, oob, po, Variant::oob);
  r.checks.push_back({"decomposition_plain", rp.pass, rp.max_residual, "<= 1e-09"});
  r.checks.push_back({"decomposition_oob", ro.pass, ro.max_residual, "<= 1e-09"});
  r.metrics["oob_explained_variance"] = explained_variance(po, data.y);
  r.metrics["oob_undefined_rows"] = static_cast<double>(oob.n_undefined());
  write_contributions_csv(oob, schema, m.path("contributions_oob.csv").string());
  m.output("contributions_oob.csv");
  m.time("decompose", t0);

  t0 = Clock::now();
  const auto govs = main_effect_gov_all(oob, x);
  const GovRequest inter_req{{2, 3}, {2, 3}, std::nullopt, {}};
  const GovReport inter = gov_score(oob, x, inter_req);
  write_text(m, "gov.txt", gov_table(govs, schema));
  write_text(m, "gov.json", gov_json(govs, schema));
  r.checks.push_back(at_least("gov_x1", govs[0].score, 0.90));
  r.checks.push_back(at_least("gov_x2", govs[1].score, 0.90));
  r.checks.push_back(at_most("gov_x3", govs[2].score, 0.30));
  r.checks.push_back(at_most("gov_x4", govs[3].score, 0.30));
  r.checks.push_back(at_least("gov_x3_plus_x4", inter.score, 0.80));
  m.time("gov", t0);

  t0 = Clock::now();
  PlotOptions opts;
  json plots = main_effect_section(m, oob, x, schema, feature_gradient(x, 2), opts);
  plots.push_back(emit_bundle(
      m, main_effect_plot(oob, x, schema, 2, feature_gradient(x, 3), opts), "main_x3_by_x4"));
  const ColorGradient by_x3 = feature_gradient(x, 2);
  const PlotBundle first =
      interaction_plot(oob, x, schema, 2, 3, InteractionResponse::first, by_x3, opts);
  const PlotBundle summed =
      interaction_plot(oob, x, schema, 2, 3, InteractionResponse::summed, by_x3, opts);
  plots.push_back(emit_bundle(m, first, "interact_x3_x4_first"));
  plots.push_back(emit_bundle(m, summed, "interact_x3_x4_summed"));
  std::size_t strong = 0;
  std::size_t agree = 0;
  for (const auto& p : summed.points) {
    const double prod = p.x * p.y;
    if (std::abs(prod) <= 0.25) continue;
    ++strong;
    if ((p.z > 0) == (prod > 0)) ++agree;
  }
  const double sign_rate = strong ? static_cast<double>(agree) / static_cast<double>(strong) : 0.0;
  r.checks.push_back({"interaction_sign_agreement", strong > 0 && sign_rate >= 0.85, sign_rate,
                      ">= 0.85"});
  m.body()["plots"] = plots;
  m.time("plots", t0);

  t0 = Clock::now();
  const GridSpec grid = default_grid(data, {1});
  const IceTable ice = ice_curves(model, data, grid, false);
  const CurveTable pd = partial_dependence(model, data, grid);
  const CurveTable sa = sensitivity_analysis(model, data, grid);
  const CurveTable ice_mean = average_curves(ice);
  r.checks.push_back({"pd_equals_mean_ice", pd.values == ice_mean.values, 0.0, "exact"});
  Dataset centre = data;
  const auto c = centroid(data);
  for (std::size_t j = 0; j < centre.columns.size(); ++j) centre.columns[j].values = {c[j]};
  centre.y = {0.0};
  const IceTable centre_ice = ice_curves(model, centre, grid, false);
  r.checks.push_back({"sa_equals_centroid_ice", sa.values == centre_ice.values, 0.0, "exact"});
  write_curve_csv(pd, data, "pd", m.path("pd_x2.csv").string());
  write_curve_csv(sa, data, "sa", m.path("sa_x2.csv").string());
  m.output("pd_x2.csv");
  m.output("sa_x2.csv");

  // Forest-floor x2 curve (GOV fit) against PD interpolated at each row.
  const GovReport& g2 = govs[1];
  std::vector<double> pd_at;
  pd_at.reserve(g2.rows.size());
  for (std::size_t i : g2.rows) pd_at.push_back(interpolate(grid.values[0], pd.values, x.at(i, 1)));
  const double rmse = centered_rmse(g2.estimates, pd_at);
  r.checks.push_back({"pd_vs_forest_floor_x2_rmse", rmse < 0.1, rmse, "< 0.1"});
  {
    std::ofstream cmp(m.path("pd_vs_ff_x2.csv"));
    cmp << "row_id,x2,forest_floor,pd\n";
    for (std::size_t q = 0; q < g2.rows.size(); ++q)
      cmp << g2.rows[q] << ',' << fmt(x.at(g2.rows[q], 1), "%.17g") << ','
          << fmt(g2.estimates[q], "%.17g") << ',' << fmt(pd_at[q], "%.17g") << '\n';
    if (!cmp) throw IoError("cannot write pd_vs_ff_x2.csv");
  }
  m.output("pd_vs_ff_x2.csv");
  m.time("baselines", t0);

  finish_repro(m, r);
  return r;
}

ReproResult repro_wwq(const ReproOptions& o) {
  ReproResult r;
  const fs::path file = fs::path(resolve_data_dir(o)) / "winequality-white.csv";
  if (!fs::exists(file)) {
    r.skipped = true;
    r.notice = "wine quality data not found at " + file.string() +
               " (download winequality-white.csv from the UCI repository)";
    return r;
  }
  fs::create_directories(o.out_dir);
  Manifest m("repro wwq", o.out_dir, "manifest.json");
  auto t0 = Clock::now();
  CsvOptions csv;
  csv.target = "quality";
  const Dataset data = load_csv(file.string(), csv);
  m.input(file.string());
  TrainConfig cfg;
  cfg.n_tree = o.n_tree;
  cfg.seed = o.seed;
  const ForestModel model = train_forest(data, cfg);
  m.body()["config"] = config_json(model.config.resolved(data));
  m.body()["seed"] = o.seed;
  m.time("train", t0);

  t0 = Clock::now();
  const FeatureMatrix x = to_matrix(data);
  const Schema schema = data.schema();
  const Predictions po = predict_oob(model, x);
  const double ev = explained_variance(po, data.y);
  const double mae = mean_absolute_error(po, data.y);
  r.metrics["oob_explained_variance"] = ev;
  r.metrics["oob_mae"] = mae;
  r.checks.push_back(within("oob_explained_variance", ev, 0.56, 0.05));
  r.checks.push_back(within("oob_mae", mae, 0.42, 0.05));
  const ContributionMatrix oob = oob_feature_contributions(model, x);
  const auto ro = verify_decomposition(model, oob, po, Variant::oob);
  r.checks.push_back({"decomposition_oob", ro.pass, ro.max_residual, "<= 1e-09"});
  write_contributions_csv(oob, schema, m.path("contributions_oob.csv").string());
  m.output("contributions_oob.csv");
  m.time("decompose", t0);

  t0 = Clock::now();
  const int va = feature_or_throw(schema, "volatile acidity");
  const int alc = feature_or_throw(schema, "alcohol");
  const auto govs = main_effect_gov_all(oob, x);
  const GovReport g = gov_score(oob, x, GovRequest{{va}, {va, alc}, std::nullopt, {}});
  write_text(m, "gov.txt", gov_table(govs, schema));
  write_text(m, "gov.json", gov_json(govs, schema));
  r.checks.push_back(at_least("gov_volatile_acidity_given_alcohol", g.score, 0.85));
  m.time("gov", t0);

  t0 = Clock::now();
  PlotOptions opts;
  json plots = main_effect_section(m, oob, x, schema, feature_gradient(x, alc), opts);
  plots.push_back(emit_bundle(m,
                              interaction_plot(oob, x, schema, va, alc,
                                               InteractionResponse::first,
                                               feature_gradient(x, alc), opts),
                              "interact_volatile_acidity_alcohol"));
  m.body()["plots"] = plots;
  m.time("plots", t0);
  finish_repro(m, r);
  return r;
}

ReproResult repro_cmc(const ReproOptions& o) {
  ReproResult r;
  const fs::path file = fs::path(resolve_data_dir(o)) / "cmc.data";
  if (!fs::exists(file)) {
    r.skipped = true;
    r.notice = "contraceptive method choice data not found at " + file.string() +
               " (download cmc.data from the UCI repository)";
    return r;
  }
  fs::create_directories(o.out_dir);
  Manifest m("repro cmc", o.out_dir, "manifest.json");
  auto t0 = Clock::now();
  CsvOptions csv;
  csv.header = false;
  csv.column_names = {"wife_age",           "wife_education", "husband_education",
                      "n_children",         "wife_religion",  "wife_working",
                      "husband_occupation", "standard_of_living", "media_exposure",
                      "contraceptive_method"};
  csv.target = "contraceptive_method";
  csv.task = Task::classification;
  csv.categorical = {"wife_religion", "wife_working", "media_exposure"};
  const Dataset data = load_csv(file.string(), csv);
  m.input(file.string());
  TrainConfig cfg;
  cfg.task = Task::classification;
  cfg.n_tree = o.n_tree;
  cfg.seed = o.seed;
  cfg.sample_size = 100;
  cfg.mtry = 2;
  const ForestModel model = train_forest(data, cfg);
  m.body()["config"] = config_json(model.config.resolved(data));
  m.body()["seed"] = o.seed;
  m.time("train", t0);

  t0 = Clock::now();
  const FeatureMatrix x = to_matrix(data);
  const Schema schema = data.schema();
  const Predictions po = predict_oob(model, x);
  const double err = error_rate(po, data.labels);
  r.metrics["oob_error_rate"] = err;
  r.checks.push_back(within("oob_error_rate", err, 0.44, 0.03));
  const auto counts = class_counts(data);
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());
  const double baseline =
      1.0 - static_cast<double>(majority) / static_cast<double>(data.n_rows());
  r.metrics["majority_baseline_error"] = baseline;
  r.checks.push_back(within("majority_baseline_error", baseline, 1.0 - 629.0 / 1473.0, 1e-12));

  const ContributionMatrix oob = oob_feature_contributions(model, x);
  const auto ro = verify_decomposition(model, oob, po, Variant::oob);
  r.checks.push_back({"decomposition_oob", ro.pass, ro.max_residual, "<= 1e-09"});
  write_contributions_csv(oob, schema, m.path("contributions_oob.csv").string());
  m.output("contributions_oob.csv");
  for (const std::string name : {"wife_religion", "wife_working", "media_exposure"}) {
    const auto groups = inbag_group_displacement(model, x, static_cast<std::size_t>(
                                                               feature_or_throw(schema, name)));
    double total_weight = 0.0;
    std::vector<double> sum(static_cast<std::size_t>(model.n_outputs()), 0.0);
    for (const auto& g : groups) {
      total_weight += g.weight;
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += g.weighted_sum[k];
    }
    double worst = 0.0;
    for (double s : sum) worst = std::max(worst, std::abs(s / total_weight));
    r.checks.push_back({"size_weighted_displacement_" + name, worst <= 1e-9, worst, "<= 1e-09"});
    if (groups.size() == 2) {
      auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s += e * e;
        return std::sqrt(s);
      };
      const auto& small = groups[0].rows < groups[1].rows ? groups[0] : groups[1];
      const auto& large = groups[0].rows < groups[1].rows ? groups[1] : groups[0];
      r.metrics["displacement_small_" + name] = norm(small.mean());
      r.metrics["displacement_large_" + name] = norm(large.mean());
    }
  }
  m.time("decompose", t0);

  t0 = Clock::now();
  const auto govs = main_effect_gov_all(oob, x);
  write_text(m, "gov.txt", gov_table(govs, schema));
  write_text(m, "gov.json", gov_json(govs, schema));
  const ColorGradient by_class = class_gradient(data.labels);
  json plots = json::array();
  plots.push_back(emit_bundle(m, simplex_plot(oob, schema, -1, by_class), "simplex_prediction"));
  for (std::size_t j = 0; j < schema.n_features(); ++j) {
    const std::string s = slug(schema.columns[j].name);
    const int jj = static_cast<int>(j);
    plots.push_back(emit_bundle(m, simplex_plot(oob, schema, jj, by_class), "simplex_" + s));
    plots.push_back(emit_bundle(m, aligned_class_plot(oob, x, schema, jj), "aligned_" + s));
  }
  m.body()["plots"] = plots;
  m.time("plots", t0);
  finish_repro(m, r);
  return r;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Common {
  std::string model;
  std::string data;
  bool oob = false;
  char delimiter = 0;
};

void add_model_data(CLI::App* sc, Common& c) {
  sc->add_option("--model", c.model, "model file written by train")->required();
  sc->add_option("--data", c.data, "CSV with the model's columns and target")->required();
  sc->add_flag("--oob", c.oob, "out-of-bag contributions (data must be the training set)");
}

std::vector<std::size_t> parse_stratify(const std::string& spec, const Dataset& data) {
  std::vector<std::size_t> out(data.class_names.size(), 0);
  std::vector<bool> seen(out.size(), false);
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--stratify expects class:count pairs");
    const std::string cls = item.substr(0, colon);
    const auto it = std::find(data.class_names.begin(), data.class_names.end(), cls);
    if (it == data.class_names.end()) throw ConfigError("--stratify names unknown class '" + cls + "'");
    const auto k = static_cast<std::size_t>(it - data.class_names.begin());
    try {
      out[k] = std::stoul(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--stratify count for '" + cls + "' is not a number");
    }
    seen[k] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw ConfigError("--stratify must give a count for every class");
  return out;
}

int report_repro(const ReproResult& r, const std::string& study) {
  if (r.skipped) {
    std::cerr << "repro " << study << ": " << r.notice << '\n';
    return kExitIo;
  }
  for (const auto& c : r.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << fmt(c.value) << " ("
              << c.detail << ")\n";
  if (!r.all_pass()) {
    std::cerr << "failed checks:";
    for (const auto& c : r.checks)
      if (!c.pass) std::cerr << ' ' << c.name;
    std::cerr << '\n';
    return kExitCheckFailed;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"forestfloor: random forest feature contributions and diagnostics"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default FF_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);

  json argv_json = json::array();
  for (int i = 1; i < argc; ++i) argv_json.push_back(argv[i]);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a toy dataset");
  std::string sim_gen = "toy4";
  ToyConfig toy;
  std::string sim_out;
  sim->add_option("--generator", sim_gen)->check(CLI::IsMember({"toy4", "sinehill"}));
  sim->add_option("--n", toy.n);
  sim->add_option("--rho", toy.rho);
  sim->add_option("--seed", toy.seed);
  sim->add_option("--out", sim_out)->required();

  // train
  auto* train = app.add_subcommand("train", "fit a random forest");
  std::string tr_data, tr_target, tr_task = "regression", tr_strat, tr_out;
  std::vector<std::string> tr_categorical;
  char tr_delim = 0;
  TrainConfig tc;
  train->add_option("--data", tr_data)->required();
  train->add_option("--target", tr_target)->required();
  train->add_option("--task", tr_task)->check(CLI::IsMember({"regression", "classification"}));
  train->add_option("--ntree", tc.n_tree)->check(CLI::PositiveNumber);
  train->add_option("--mtry", tc.mtry)->check(CLI::NonNegativeNumber);
  train->add_option("--sampsize", tc.sample_size);
  train->add_flag("--replace,!--no-replace", tc.replace, "bootstrap with replacement");
  train->add_option("--stratify", tr_strat, "per-class bag sizes, class:n,...");
  train->add_option("--min-node", tc.min_node_size)->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tc.seed);
  train->add_option("--categorical", tr_categorical, "force columns categorical")->delimiter(',');
  train->add_option("--delimiter", tr_delim);
  train->add_option("--out", tr_out)->required();

  // decompose
  auto* dec = app.add_subcommand("decompose", "feature contributions and identity check");
  Common dc;
  std::string dec_out;
  add_model_data(dec, dc);
  dec->add_option("--out", dec_out, "contributions file (.csv or .json)")->required();

  // gov
  auto* gov = app.add_subcommand("gov", "goodness of visualization scores");
  Common gc;
  std::vector<std::string> gov_features, gov_context;
  int gov_k = 0;
  int gov_class = -1;
  std::string gov_out;
  add_model_data(gov, gc);
  gov->add_option("--feature", gov_features, "response feature(s); summed if several")
      ->delimiter(',');
  gov->add_option("--context", gov_context, "context feature(s)")->delimiter(',');
  gov->add_option("--k", gov_k)->check(CLI::NonNegativeNumber);
  gov->add_option("--class", gov_class, "class index for classification");
  gov->add_option("--out", gov_out, "JSON report");

  // plot
  auto* plot = app.add_subcommand("plot", "forest floor plots");
  plot->require_subcommand(1);
  Common pc;
  std::string p_out_dir, p_color = "", p_feature, p_feature2, p_response = "first";
  bool p_rank = false, p_no_gov = false;
  int p_k = 0, p_class = 0;
  SvgOptions svg;
  std::vector<CLI::App*> plot_kinds;
  for (const char* kind : {"main", "interact", "simplex", "aligned"}) {
    auto* s = plot->add_subcommand(kind);
    add_model_data(s, pc);
    s->add_option("--out-dir", p_out_dir)->required();
    s->add_option("--feature", p_feature);
    s->add_option("--color-by", p_color, "feature:NAME | pca | class");
    s->add_flag("--rank", p_rank, "rank-based colour mapping");
    s->add_option("--k", p_k)->check(CLI::NonNegativeNumber);
    s->add_flag("--no-gov", p_no_gov);
    s->add_option("--class", p_class);
    s->add_option("--width", svg.width);
    s->add_option("--height", svg.height);
    if (std::string(kind) == "interact") {
      s->add_option("--feature2", p_feature2)->required();
      s->add_option("--response", p_response)->check(CLI::IsMember({"first", "summed"}));
      s->add_option("--azimuth", svg.azimuth_deg);
      s->add_option("--elevation", svg.elevation_deg);
    }
    plot_kinds.push_back(s);
  }

  // baseline
  auto* base = app.add_subcommand("baseline", "sensitivity analysis, PD and ICE");
  base->require_subcommand(1);
  std::string b_model, b_data, b_out;
  std::vector<std::string> b_features;
  std::size_t b_grid = 50;
  bool b_centered = false;
  std::vector<CLI::App*> base_kinds;
  for (const char* kind : {"sa", "pd", "ice"}) {
    auto* s = base->add_subcommand(kind);
    s->add_option("--model", b_model)->required();
    s->add_option("--data", b_data)->required();
    s->add_option("--feature", b_features, "one or two features")->required()->delimiter(',');
    s->add_option("--grid", b_grid, "max grid points per numeric feature");
    s->add_option("--out", b_out)->required();
    if (std::string(kind) == "ice") s->add_flag("--centered", b_centered);
    base_kinds.push_back(s);
  }

  // repro
  auto* repro = app.add_subcommand("repro", "reproduce a study end to end");
  ReproOptions ro;
  std::string study;
  repro->add_option("study", study)->required()->check(CLI::IsMember({"toy", "wwq", "cmc"}));
  repro->add_option("--out-dir", ro.out_dir)->required();
  repro->add_option("--seed", ro.seed);
  repro->add_option("--n", ro.n, "toy sample size");
  repro->add_option("--ntree", ro.n_tree)->check(CLI::PositiveNumber);
  repro->add_option("--data-dir", ro.data_dir, "directory holding UCI files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (threads > 0) set_thread_count(threads);

    if (sim->parsed()) {
      toy.generator = sim_gen == "toy4" ? ToyGenerator::toy4 : ToyGenerator::sinehill;
      auto t0 = Clock::now();
      const ToyData t = simulate_toy(toy);
      Manifest m = file_manifest("simulate", sim_out);
      write_csv(t.data, sim_out);
      m.output(fs::path(sim_out).filename().string());
      m.body()["argv"] = argv_json;
      m.body()["seed"] = toy.seed;
      m.body()["config"] = {{"generator", sim_gen}, {"n", toy.n}, {"rho", toy.rho},
                            {"noise_scale", t.noise_scale},
                            {"realized_correlation", t.realized_correlation}};
      m.time("simulate", t0);
      m.write();
      std::cout << "wrote " << sim_out << " (noise scale " << fmt(t.noise_scale)
                << ", cor(G, y) = " << fmt(t.realized_correlation) << ")\n";
      return kExitOk;
    }

    if (train->parsed()) {
      auto t0 = Clock::now();
      CsvOptions o;
      o.target = tr_target;
      o.task = task_from_string(tr_task);
      o.delimiter = tr_delim;
      o.categorical = tr_categorical;
      const Dataset data = load_csv(tr_data, o);
      tc.task = o.task;
      if (!tr_strat.empty()) tc.stratify = parse_stratify(tr_strat, data);
      const ForestModel model = train_forest(data, tc);
      Manifest m = file_manifest("train", tr_out);
      m.time("train", t0);
      save_model(model, tr_out);
      m.output(fs::path(tr_out).filename().string());
      m.input(tr_data);
      m.body()["argv"] = argv_json;
      m.body()["seed"] = tc.seed;
      m.body()["config"] = config_json(model.config.resolved(data));
      const Predictions po = predict_oob(model, to_matrix(data));
      if (data.task == Task::regression) {
        m.body()["oob_explained_variance"] = explained_variance(po, data.y);
        std::cout << "OOB explained variance " << fmt(explained_variance(po, data.y))
                  << ", OOB MAE " << fmt(mean_absolute_error(po, data.y)) << '\n';
      } else {
        m.body()["oob_error_rate"] = error_rate(po, data.labels);
        std::cout << "OOB error rate " << fmt(error_rate(po, data.labels)) << '\n';
      }
      m.write();
      std::cout << "wrote " << tr_out << '\n';
      return kExitOk;
    }

    if (dec->parsed()) {
      auto t0 = Clock::now();
      const ForestModel model = load_model(dc.model);
      const Dataset data = load_for_model(dc.data, model.schema, dc.delimiter);
      const FeatureMatrix x = to_matrix(data);
      const ContributionMatrix f = contributions_for(model, x, dc.oob);
      const Predictions p = dc.oob ? predict_oob(model, x) : predict(model, x);
      const auto rep =
          verify_decomposition(model, f, p, dc.oob ? Variant::oob : Variant::plain);
      Manifest m = file_manifest("decompose", dec_out);
      if (fs::path(dec_out).extension() == ".json")
        write_contributions_json(f, model.schema, dec_out);
      else
        write_contributions_csv(f, model.schema, dec_out);
      m.output(fs::path(dec_out).filename().string());
      m.input(dc.model);
      m.input(dc.data);
      m.body()["argv"] = argv_json;
      m.body()["variant"] = to_string(f.variant);
      m.body()["max_residual"] = rep.max_residual;
      m.body()["rows_undefined"] = rep.rows_undefined;
      m.time("decompose", t0);
      m.write();
      std::cout << "max residual " << fmt(rep.max_residual, "%.3e") << " over "
                << rep.rows_checked << " rows";
      if (rep.rows_undefined) std::cout << " (" << rep.rows_undefined << " undefined)";
      std::cout << '\n';
      return rep.pass ? kExitOk : kExitCheckFailed;
    }

    if (gov->parsed()) {
      const ForestModel model = load_model(gc.model);
      const Dataset data = load_for_model(gc.data, model.schema, gc.delimiter);
      const FeatureMatrix x = to_matrix(data);
      const ContributionMatrix f = contributions_for(model, x, gc.oob);
      std::vector<GovReport> reports;
      if (gov_features.empty()) {
        if (!gov_context.empty()) throw ConfigError("--context needs --feature");
        reports = main_effect_gov_all(f, x, KernelConfig{gov_k});
      } else {
        GovRequest req;
        for (const auto& n : gov_features)
          req.response_features.push_back(feature_or_throw(model.schema, n));
        for (const auto& n : gov_context.empty() ? gov_features : gov_context)
          req.context.push_back(feature_or_throw(model.schema, n));
        if (gov_class >= 0) req.class_index = gov_class;
        req.kernel.k = gov_k;
        reports.push_back(gov_score(f, x, req));
      }
      std::cout << gov_table(reports, model.schema);
      if (!gov_out.empty()) {
        Manifest m = file_manifest("gov", gov_out);
        std::ofstream o(gov_out);
        o << gov_json(reports, model.schema);
        if (!o) throw IoError("cannot write '" + gov_out + "'");
        o.close();
        m.output(fs::path(gov_out).filename().string());
        m.input(gc.model);
        m.input(gc.data);
        m.body()["argv"] = argv_json;
        m.write();
      }
      return kExitOk;
    }

    if (plot->parsed()) {
      auto t0 = Clock::now();
      const ForestModel model = load_model(pc.model);
      const Dataset data = load_for_model(pc.data, model.schema, pc.delimiter);
      const FeatureMatrix x = to_matrix(data);
      const ContributionMatrix f = contributions_for(model, x, pc.oob);
      fs::create_directories(p_out_dir);
      Manifest m("plot", p_out_dir, "manifest.json");
      m.input(pc.model);
      m.input(pc.data);
      m.body()["argv"] = argv_json;
      const ColorGradient grad = parse_gradient(p_color, data, x, p_rank);
      PlotOptions opts;
      opts.with_gov = !p_no_gov;
      opts.class_index = p_class;
      opts.kernel.k = p_k;
      json plots = json::array();
      const std::string kind = plot->get_subcommands().front()->get_name();
      const Schema& s = model.schema;
      if (kind == "main") {
        if (p_feature.empty()) {
          plots = main_effect_section(m, f, x, s, grad, opts);
        } else {
          const int j = feature_or_throw(s, p_feature);
          plots.push_back(
              emit_bundle(m, main_effect_plot(f, x, s, j, grad, opts), "main_" + slug(p_feature)));
        }
      } else if (kind == "interact") {
        if (p_feature.empty()) throw ConfigError("interact needs --feature and --feature2");
        const int a = feature_or_throw(s, p_feature);
        const int b = feature_or_throw(s, p_feature2);
        const auto resp =
            p_response == "summed" ? InteractionResponse::summed : InteractionResponse::first;
        plots.push_back(emit_bundle(m, interaction_plot(f, x, s, a, b, resp, grad, opts),
                                    "interact_" + slug(p_feature) + "_" + slug(p_feature2) +
                                        "_" + p_response,
                                    svg));
      } else if (kind == "simplex") {
        const int j = p_feature.empty() ? -1 : feature_or_throw(s, p_feature);
        plots.push_back(emit_bundle(m, simplex_plot(f, s, j, grad),
                                    "simplex_" + (j < 0 ? std::string("prediction") : slug(p_feature)),
                                    svg));
      } else {
        std::vector<int> js;
        if (p_feature.empty())
          for (std::size_t j = 0; j < s.n_features(); ++j) js.push_back(static_cast<int>(j));
        else
          js.push_back(feature_or_throw(s, p_feature));
        for (int j : js)
          plots.push_back(emit_bundle(m, aligned_class_plot(f, x, s, j),
                                      "aligned_" + slug(s.columns[static_cast<std::size_t>(j)].name),
                                      svg));
      }
      m.body()["plots"] = plots;
      m.time("plot", t0);
      m.write();
      for (const auto& p : plots) {
        std::cout << p_out_dir << '/' << p["file"].get<std::string>();
        if (!p["gov"].is_null()) std::cout << "  GOV R^2 = " << fmt(p["gov"].get<double>(), "%.3f");
        if (p["clipped"].get<std::size_t>()) std::cout << "  clipped " << p["clipped"];
        std::cout << '\n';
      }
      return kExitOk;
    }

    if (base->parsed()) {
      auto t0 = Clock::now();
      const ForestModel model = load_model(b_model);
      const Dataset data = load_for_model(b_data, model.schema, 0);
      std::vector<int> fs_idx;
      for (const auto& n : b_features) fs_idx.push_back(feature_or_throw(model.schema, n));
      const GridSpec grid = default_grid(data, fs_idx, b_grid);
      const std::string kind = base->get_subcommands().front()->get_name();
      Manifest m = file_manifest("baseline " + kind, b_out);
      if (kind == "sa")
        write_curve_csv(sensitivity_analysis(model, data, grid), data, "sa", b_out);
      else if (kind == "pd")
        write_curve_csv(partial_dependence(model, data, grid), data, "pd", b_out);
      else
        write_ice_csv(ice_curves(model, data, grid, b_centered), data, b_out);
      m.output(fs::path(b_out).filename().string());
      m.input(b_model);
      m.input(b_data);
      m.body()["argv"] = argv_json;
      m.body()["grid_points"] = grid.n_points();
      m.time(kind, t0);
      m.write();
      std::cout << "wrote " << b_out << " (" << grid.n_points() << " grid points)\n";
      return kExitOk;
    }

    if (repro->parsed()) {
      ReproResult r;
      if (study == "toy")
        r = repro_toy(ro);
      else if (study == "wwq")
        r = repro_wwq(ro);
      else
        r = repro_cmc(ro);
      return report_repro(r, study);
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DegenerateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace ffloor
