#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ffloor/dataset.hpp"
#include "ffloor/forest.hpp"

namespace ffloor {

struct CsvOptions {
  std::string target;                     // target column name (required)
  Task task = Task::regression;
  char delimiter = 0;                     // 0 detects ',' or ';' from the header
  bool header = true;
  std::vector<std::string> column_names;  // used when header == false
  std::vector<std::string> categorical;   // force these columns categorical
  std::vector<std::string> drop;          // ignore these columns
};

// Numeric columns are those whose every value parses as a finite number;
// anything else is categorical with levels in first-appearance order.
// Classification labels are sorted numerically when all are numbers, else
// kept in first-appearance order. Missing values ("", NA, ?, nan), ragged
// rows and header-only files raise DataError naming the line.
Dataset load_csv(const std::string& path, const CsvOptions& options);
Dataset parse_csv(std::istream& in, const CsvOptions& options,
                  const std::string& source = "<stream>");

void write_csv(const Dataset& data, const std::string& path);

enum class ToyGenerator { toy4, sinehill };

struct ToyConfig {
  std::size_t n = 5000;
  std::uint64_t seed = 1;
  double rho = 0.75;  // target sample correlation between G and y
  ToyGenerator generator = ToyGenerator::toy4;
};

struct ToyData {
  Dataset data;
  std::vector<double> signal;  // noiseless G per row
  double noise_scale = 0.0;    // k in y = G + k * eps
  double realized_correlation = 0.0;
};

// toy4: x1..x6 ~ U(-1, 1), G = x1^2 + sin(2 pi x2) / 2 + x3 x4 (x5, x6 are
// distractors). sinehill: X1, X2 ~ U(0, pi), G = sin(X1)^8 sin(X2)^8.
// y = G + k eps, eps ~ N(0, 1), with k bisected on the realized sample so
// that cor(G, y) = rho.
ToyData simulate_toy(const ToyConfig& config);

double toy4_signal(double x1, double x2, double x3, double x4);

// Model file: one JSON document holding format/version header, schema,
// config, base rate, flat per-tree node arrays and the dense in-bag matrix.
// Doubles are written with 17 significant digits; a checksum over trees,
// in-bag counts and base rate guards against corruption.
inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ForestModel& model);
ForestModel model_from_json(const std::string& text);
void save_model(const ForestModel& model, const std::string& path);
ForestModel load_model(const std::string& path);
std::uint64_t model_checksum(const ForestModel& model);

// FNV-1a 64 of a file's bytes (used for run manifests).
std::uint64_t file_hash(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace ffloor
