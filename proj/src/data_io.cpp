#include "ffloor/data_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ffloor/errors.hpp"
#include "ffloor/gov.hpp"
#include "ffloor/rng.hpp"

namespace ffloor {

using json = nlohmann::json;

namespace {

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(static_cast<unsigned char>(s[b]))) ++b;
  s.erase(0, b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == delim && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && ptr == e && std::isfinite(v);
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "?" || s == "nan" || s == "NaN" || s == "NULL";
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  if (options.target.empty()) throw ConfigError("no target column given for " + source);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> names;
  char delim = options.delimiter;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line.erase(0, 3);
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  std::vector<std::vector<std::string>> cells;
  if (options.header) {
    if (!next_line()) throw DataError(source + ": empty file");
    if (delim == 0)
      delim = line.find(';') != std::string::npos && line.find(',') == std::string::npos ? ';' : ',';
    names = split(line, delim);
  } else {
    names = options.column_names;
    if (names.empty()) throw ConfigError(source + ": headerless CSV needs column names");
  }
  while (next_line()) {
    if (delim == 0)
      delim = line.find(';') != std::string::npos && line.find(',') == std::string::npos ? ';' : ',';
    auto row = split(line, delim);
    if (row.size() != names.size())
      throw DataError(source + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(row.size()) + " fields, expected " +
                      std::to_string(names.size()));
    for (std::size_t c = 0; c < row.size(); ++c)
      if (is_missing(row[c]))
        throw DataError(source + ": missing value in column '" + names[c] + "' at line " +
                        std::to_string(line_no));
    cells.push_back(std::move(row));
  }
  if (cells.empty()) throw DataError(source + ": no data rows (empty dataset)");

  const auto target_it = std::find(names.begin(), names.end(), options.target);
  if (target_it == names.end())
    throw DataError(source + ": target column '" + options.target + "' not found");
  const auto target_col = static_cast<std::size_t>(target_it - names.begin());

  Dataset d;
  d.task = options.task;
  d.target_name = options.target;
  const std::size_t n = cells.size();

  if (options.task == Task::regression) {
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      if (!parse_number(cells[i][target_col], d.y[i]))
        throw DataError(source + ": non-numeric regression target '" + cells[i][target_col] +
                        "' at data row " + std::to_string(i + 1));
  } else {
    std::vector<std::string> order;
    std::unordered_map<std::string, int> seen;
    bool all_numeric = true;
    for (const auto& row : cells) {
      const std::string& v = row[target_col];
      if (seen.emplace(v, 0).second) {
        order.push_back(v);
        double tmp;
        if (!parse_number(v, tmp)) all_numeric = false;
      }
    }
    if (all_numeric)
      std::stable_sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
        return std::stod(a) < std::stod(b);
      });
    for (std::size_t k = 0; k < order.size(); ++k) seen[order[k]] = static_cast<int>(k);
    d.class_names = order;
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.labels[i] = seen.at(cells[i][target_col]);
  }

  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c == target_col || contains(options.drop, names[c])) continue;
    FeatureColumn col;
    col.meta.name = names[c];
    col.values.resize(n);
    bool numeric = !contains(options.categorical, names[c]);
    if (numeric)
      for (std::size_t i = 0; i < n && numeric; ++i)
        numeric = parse_number(cells[i][c], col.values[i]);
    if (!numeric) {
      col.meta.kind = ColumnKind::categorical;
      std::unordered_map<std::string, int> code;
      for (std::size_t i = 0; i < n; ++i) {
        auto [it, fresh] = code.emplace(cells[i][c], static_cast<int>(code.size()) + 1);
        if (fresh) col.meta.levels.push_back(cells[i][c]);
        col.values[i] = it->second;
      }
    }
    d.columns.push_back(std::move(col));
  }
  d.validate();
  return d;
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, options, path);
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& c : data.columns) out << c.meta.name << ',';
  out << data.target_name << '\n';
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (const auto& c : data.columns) {
      if (c.meta.categorical())
        out << c.meta.levels[static_cast<std::size_t>(c.values[i]) - 1] << ',';
      else
        out << num(c.values[i]) << ',';
    }
    if (data.task == Task::regression)
      out << num(data.y[i]) << '\n';
    else
      out << data.class_names[static_cast<std::size_t>(data.labels[i])] << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

double toy4_signal(double x1, double x2, double x3, double x4) {
  return x1 * x1 + 0.5 * std::sin(2.0 * std::numbers::pi * x2) + x3 * x4;
}

ToyData simulate_toy(const ToyConfig& config) {
  if (!(config.rho > 0.0 && config.rho <= 1.0))
    throw ConfigError("toy correlation rho must lie in (0, 1]");
  if (config.n < 10) throw ConfigError("toy sample size must be >= 10");
  SplitMix64 rng(stream_seed(config.seed, 0x70795ULL));
  const std::size_t n = config.n;
  const std::size_t d = config.generator == ToyGenerator::toy4 ? 6 : 2;

  ToyData t;
  t.data.task = Task::regression;
  t.data.target_name = "y";
  for (std::size_t j = 0; j < d; ++j) {
    FeatureColumn c;
    c.meta.name = (config.generator == ToyGenerator::toy4 ? "x" : "X") + std::to_string(j + 1);
    c.values.resize(n);
    t.data.columns.push_back(std::move(c));
  }
  t.signal.resize(n);
  std::vector<double> eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (config.generator == ToyGenerator::toy4) {
      for (std::size_t j = 0; j < d; ++j) t.data.columns[j].values[i] = rng.uniform(-1.0, 1.0);
      const auto& c = t.data.columns;
      t.signal[i] = toy4_signal(c[0].values[i], c[1].values[i], c[2].values[i], c[3].values[i]);
    } else {
      const double a = rng.uniform(0.0, std::numbers::pi);
      const double b = rng.uniform(0.0, std::numbers::pi);
      t.data.columns[0].values[i] = a;
      t.data.columns[1].values[i] = b;
      t.signal[i] = std::pow(std::sin(a), 8) * std::pow(std::sin(b), 8);
    }
  }
  for (std::size_t i = 0; i < n; ++i) eps[i] = rng.normal();

  double mean_g = 0.0;
  for (double g : t.signal) mean_g += g;
  mean_g /= static_cast<double>(n);
  double var_g = 0.0;
  for (double g : t.signal) var_g += (g - mean_g) * (g - mean_g);
  if (!(var_g > 1e-12 * static_cast<double>(n)))
    throw DegenerateError("toy signal has no variance; correlation target unsolvable");

  std::vector<double> y(n);
  auto corr_at = [&](double k) {
    for (std::size_t i = 0; i < n; ++i) y[i] = t.signal[i] + k * eps[i];
    return pearson_correlation(t.signal, y);
  };
  double k = 0.0;
  if (config.rho < 1.0) {
    double lo = 0.0;
    double hi = 1.0;
    while (corr_at(hi) > config.rho) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e12) throw DegenerateError("toy noise scale diverged");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (corr_at(mid) > config.rho ? lo : hi) = mid;
    }
    k = 0.5 * (lo + hi);
  }
  t.realized_correlation = corr_at(k);
  if (std::abs(t.realized_correlation - config.rho) > 1e-3)
    throw DegenerateError("toy correlation target not reached");
  t.noise_scale = k;
  t.data.y = y;
  t.data.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Model persistence

namespace {

constexpr const char* kModelFormat = "forestfloor-model";
constexpr const char* kRngContract = "splitmix64: tree j seeded with stream_seed(seed, j)";

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
void append_array(std::string& s, const std::vector<T>& v, F fmt) {
  s += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += fmt(v[i]);
  }
  s += ']';
}

json schema_json(const Schema& schema) {
  json cols = json::array();
  for (const auto& c : schema.columns)
    cols.push_back({{"name", c.name},
                    {"kind", c.categorical() ? "categorical" : "numeric"},
                    {"levels", c.levels}});
  return {{"task", to_string(schema.task)},
          {"target", schema.target_name},
          {"class_names", schema.class_names},
          {"columns", cols}};
}

Schema schema_from(const json& j) {
  Schema s;
  s.task = task_from_string(j.at("task").get<std::string>());
  s.target_name = j.at("target").get<std::string>();
  s.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& c : j.at("columns")) {
    ColumnSchema col;
    col.name = c.at("name").get<std::string>();
    col.kind = c.at("kind") == "categorical" ? ColumnKind::categorical : ColumnKind::numeric;
    col.levels = c.at("levels").get<std::vector<std::string>>();
    s.columns.push_back(std::move(col));
  }
  return s;
}

json config_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)},
          {"n_tree", c.n_tree},
          {"mtry", c.mtry},
          {"sample_size", c.sample_size},
          {"replace", c.replace},
          {"stratify", c.stratify},
          {"min_node_size", c.min_node_size},
          {"seed", c.seed},
          {"max_categorical_levels", c.max_categorical_levels}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.task = task_from_string(j.at("task").get<std::string>());
  c.n_tree = j.at("n_tree").get<int>();
  c.mtry = j.at("mtry").get<int>();
  c.sample_size = j.at("sample_size").get<std::size_t>();
  c.replace = j.at("replace").get<bool>();
  c.stratify = j.at("stratify").get<std::vector<std::size_t>>();
  c.min_node_size = j.at("min_node_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_categorical_levels = j.at("max_categorical_levels").get<int>();
  return c;
}

}  // namespace

std::uint64_t model_checksum(const ForestModel& model) {
  Fnv f;
  f.u64(model.n_train);
  for (double v : model.base_rate) f.f64(v);
  for (const Tree& t : model.trees) {
    f.i64(t.n_outputs);
    f.u64(t.nodes.size());
    for (const TreeNode& n : t.nodes) {
      f.i64(n.parent);
      f.i64(n.left);
      f.i64(n.right);
      f.u64(n.in_bag_count);
      if (n.split) {
        f.i64(n.split->feature);
        f.u64(n.split->categorical);
        f.f64(n.split->threshold);
        f.u64(n.split->left_levels);
      } else {
        f.i64(-1);
      }
    }
    for (double v : t.values) f.f64(v);
  }
  for (std::uint32_t v : model.in_bag) f.u64(v);
  return f.h;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string model_to_json(const ForestModel& model) {
  std::string s;
  s.reserve(64 * 1024);
  s += "{\"format\":\"";
  s += kModelFormat;
  s += "\",\"version\":" + std::to_string(kModelFormatVersion);
  s += ",\"rng\":" + json(kRngContract).dump();
  s += ",\"checksum\":\"" + hex64(model_checksum(model)) + "\"";
  s += ",\"schema\":" + schema_json(model.schema).dump();
  s += ",\"config\":" + config_json(model.config).dump();
  s += ",\"n_train\":" + std::to_string(model.n_train);
  s += ",\"base_rate\":";
  append_array(s, model.base_rate, num17);
  s += ",\"trees\":[";
  auto int_fmt = [](auto v) { return std::to_string(v); };
  for (std::size_t j = 0; j < model.trees.size(); ++j) {
    const Tree& t = model.trees[j];
    if (j) s += ',';
    std::vector<int> parent, feature, categorical, left, right;
    std::vector<std::uint32_t> levels;
    std::vector<std::uint64_t> count;
    std::vector<double> threshold;
    for (const TreeNode& n : t.nodes) {
      parent.push_back(n.parent);
      left.push_back(n.left);
      right.push_back(n.right);
      count.push_back(n.in_bag_count);
      feature.push_back(n.split ? n.split->feature : -1);
      categorical.push_back(n.split && n.split->categorical ? 1 : 0);
      threshold.push_back(n.split ? n.split->threshold : 0.0);
      levels.push_back(n.split ? n.split->left_levels : 0U);
    }
    s += "{\"n_outputs\":" + std::to_string(t.n_outputs);
    s += ",\"parent\":";
    append_array(s, parent, int_fmt);
    s += ",\"feature\":";
    append_array(s, feature, int_fmt);
    s += ",\"categorical\":";
    append_array(s, categorical, int_fmt);
    s += ",\"threshold\":";
    append_array(s, threshold, num17);
    s += ",\"left_levels\":";
    append_array(s, levels, int_fmt);
    s += ",\"left\":";
    append_array(s, left, int_fmt);
    s += ",\"right\":";
    append_array(s, right, int_fmt);
    s += ",\"in_bag_count\":";
    append_array(s, count, int_fmt);
    s += ",\"values\":";
    append_array(s, t.values, num17);
    s += '}';
  }
  s += "],\"in_bag\":{\"rows\":" + std::to_string(model.n_train) +
       ",\"cols\":" + std::to_string(model.trees.size()) +
       ",\"order\":\"row-major: entry i*cols+j is the bag count of training row i in tree j\"" +
       ",\"data\":";
  append_array(s, model.in_bag, int_fmt);
  s += "}}\n";
  return s;
}

ForestModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kModelFormat)
      throw FormatError("not a forestfloor model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("model format version " + std::to_string(version) +
                        " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    ForestModel m;
    m.schema = schema_from(j.at("schema"));
    m.config = config_from(j.at("config"));
    m.n_train = j.at("n_train").get<std::size_t>();
    m.base_rate = j.at("base_rate").get<std::vector<double>>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      t.n_outputs = jt.at("n_outputs").get<int>();
      const auto parent = jt.at("parent").get<std::vector<int>>();
      const auto feature = jt.at("feature").get<std::vector<int>>();
      const auto categorical = jt.at("categorical").get<std::vector<int>>();
      const auto threshold = jt.at("threshold").get<std::vector<double>>();
      const auto levels = jt.at("left_levels").get<std::vector<std::uint32_t>>();
      const auto left = jt.at("left").get<std::vector<int>>();
      const auto right = jt.at("right").get<std::vector<int>>();
      const auto count = jt.at("in_bag_count").get<std::vector<std::uint64_t>>();
      t.values = jt.at("values").get<std::vector<double>>();
      const std::size_t nn = parent.size();
      if (feature.size() != nn || categorical.size() != nn || threshold.size() != nn ||
          levels.size() != nn || left.size() != nn || right.size() != nn ||
          count.size() != nn || t.values.size() != nn * static_cast<std::size_t>(t.n_outputs))
        throw FormatError("tree arrays differ in length");
      for (std::size_t i = 0; i < nn; ++i) {
        TreeNode n;
        n.parent = parent[i];
        n.left = left[i];
        n.right = right[i];
        n.in_bag_count = count[i];
        if (feature[i] >= 0) {
          SplitRule r;
          r.feature = feature[i];
          r.categorical = categorical[i] != 0;
          r.threshold = threshold[i];
          r.left_levels = levels[i];
          n.split = r;
          if (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(n.left) >= nn ||
              static_cast<std::size_t>(n.right) >= nn)
            throw FormatError("tree node has invalid child index");
        }
        t.nodes.push_back(n);
      }
      m.trees.push_back(std::move(t));
    }
    const auto& ib = j.at("in_bag");
    if (ib.at("rows").get<std::size_t>() != m.n_train ||
        ib.at("cols").get<std::size_t>() != m.trees.size())
      throw FormatError("in_bag dimensions do not match the model");
    m.in_bag = ib.at("data").get<std::vector<std::uint32_t>>();
    if (m.in_bag.size() != m.n_train * m.trees.size())
      throw FormatError("in_bag matrix is truncated");
    const std::string expected = j.at("checksum").get<std::string>();
    if (hex64(model_checksum(m)) != expected)
      throw FormatError("model checksum mismatch (file corrupted?)");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const ForestModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model '" + path + "'");
  out << model_to_json(model);
  if (!out) throw IoError("write failed for model '" + path + "'");
}

ForestModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  Fnv f;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    f.bytes(buf, static_cast<std::size_t>(in.gcount()));
  }
  return f.h;
}

}  // namespace ffloor
