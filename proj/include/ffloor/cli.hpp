#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ffloor {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;  // the threshold that was applied
};

struct ReproOptions {
  std::string out_dir;
  std::uint64_t seed = 1;
  std::size_t n = 5000;  // toy only
  int n_tree = 500;
  std::string data_dir;  // wwq / cmc; falls back to FF_DATA_DIR
};

struct ReproResult {
  bool skipped = false;
  std::string notice;
  std::vector<Check> checks;
  std::vector<std::string> files;        // relative to out_dir
  std::map<std::string, double> metrics;
  bool all_pass() const;
};

// Each study writes its artifacts, checks.json and manifest.json (plus the
// volatile timings.json) into options.out_dir.
ReproResult repro_toy(const ReproOptions& options);
ReproResult repro_wwq(const ReproOptions& options);
ReproResult repro_cmc(const ReproOptions& options);

// Mean-centred RMSE between two equally long curves.
double centered_rmse(const std::vector<double>& a, const std::vector<double>& b);
// Piecewise-linear interpolation of (xs, ys) at x, clamped at the ends.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x);

int run_cli(int argc, char** argv);

}  // namespace ffloor
