#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ffloor/cli.hpp"
#include "ffloor/data_io.hpp"

using namespace ffloor;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI in-process and captures stdout.
Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "forestfloor");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  std::ostringstream err;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  std::cerr.rdbuf(old_err);
  r.out = captured.str();
  return r;
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / "ff_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("curve helpers") {
  CHECK(centered_rmse({1, 2, 3}, {11, 12, 13}) == 0.0);
  CHECK(centered_rmse({0, 0}, {1, -1}) == doctest::Approx(1.0));
  const std::vector<double> xs{0, 1, 3}, ys{0, 10, 30};
  CHECK(interpolate(xs, ys, -1) == 0.0);
  CHECK(interpolate(xs, ys, 2) == 20.0);
  CHECK(interpolate(xs, ys, 0.5) == 5.0);
  CHECK(interpolate(xs, ys, 9) == 30.0);
}

TEST_CASE("usage errors exit with 2, help with 0") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"train", "--data", "x.csv"}).code == kExitUsage);
  CHECK(run({"simulate", "--generator", "nope", "--out", "x.csv"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("missing input files exit with 3") {
  const auto dir = scratch();
  CHECK(run({"train", "--data", (dir / "absent.csv").string(), "--target", "y", "--out",
             (dir / "m.json").string()})
            .code == kExitIo);
  CHECK(run({"decompose", "--model", (dir / "absent.json").string(), "--data",
             (dir / "absent.csv").string(), "--out", (dir / "c.csv").string()})
            .code == kExitIo);
}

TEST_CASE("simulate, train, decompose, gov, plot and baseline end to end") {
  const auto dir = scratch();
  const std::string data = (dir / "toy.csv").string();
  const std::string model = (dir / "model.json").string();

  Run r = run({"simulate", "--n", "300", "--seed", "4", "--out", data});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(data + ".manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(data + ".manifest.json"));
  CHECK(manifest["seed"] == 4);
  REQUIRE(manifest["outputs"].size() == 2);
  CHECK(manifest["outputs"][0]["file"] == "toy.csv");
  CHECK(manifest["outputs"][1]["volatile"] == true);

  r = run({"train", "--data", data, "--target", "y", "--ntree", "20", "--seed", "2", "--out",
           model});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(model));

  for (const char* oob : {"", "--oob"}) {
    std::vector<std::string> args{"decompose", "--model", model, "--data", data, "--out",
                                  (dir / "c.csv").string()};
    if (*oob) args.push_back(oob);
    r = run(args);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("max residual") != std::string::npos);
  }
  r = run({"decompose", "--model", model, "--data", data, "--oob", "--out",
           (dir / "c.json").string()});
  CHECK(r.code == kExitOk);

  r = run({"gov", "--model", model, "--data", data, "--oob", "--out",
           (dir / "gov.json").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("x1") != std::string::npos);
  const auto gov = nlohmann::json::parse(slurp(dir / "gov.json"));
  REQUIRE(gov.is_array());
  CHECK(gov.size() == 6);
  CHECK(gov[0].contains("gov"));

  const std::string plots = (dir / "plots").string();
  CHECK(run({"plot", "main", "--model", model, "--data", data, "--oob", "--out-dir", plots,
             "--color-by", "feature:x3"})
            .code == kExitOk);
  CHECK(run({"plot", "interact", "--model", model, "--data", data, "--out-dir", plots,
             "--feature", "x3", "--feature2", "x4", "--response", "summed"})
            .code == kExitOk);
  CHECK(fs::exists(fs::path(plots) / "manifest.json"));
  std::size_t svgs = 0;
  for (const auto& e : fs::directory_iterator(plots)) svgs += e.path().extension() == ".svg";
  CHECK(svgs >= 7);
  CHECK(run({"plot", "simplex", "--model", model, "--data", data, "--out-dir", plots})
            .code == kExitUsage);

  CHECK(run({"baseline", "pd", "--model", model, "--data", data, "--feature", "x2", "--out",
             (dir / "pd.csv").string()})
            .code == kExitOk);
  CHECK(slurp(dir / "pd.csv").rfind("x2,row_id,prediction\n", 0) == 0);
  CHECK(run({"baseline", "ice", "--model", model, "--data", data, "--feature", "x2,x3",
             "--grid", "4", "--centered", "--out", (dir / "ice.csv").string()})
            .code == kExitOk);
  CHECK(run({"baseline", "sa", "--model", model, "--data", data, "--feature", "nope",
             "--out", (dir / "sa.csv").string()})
            .code == kExitUsage);
}

TEST_CASE("repro for an absent UCI file skips with exit 3") {
  const auto dir = scratch();
  const Run r = run({"repro", "wwq", "--out-dir", (dir / "wwq").string(), "--data-dir",
                     (dir / "no_data").string()});
  CHECK(r.code == kExitIo);
}
