#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "popcorn/cli.hpp"
#include "popcorn/trajectory.hpp"

using namespace popcorn;
namespace fs = std::filesystem;

namespace {

std::string write_tmp(const std::string& name, const std::string& text) {
  const std::string path = "/tmp/popcorn_cli_" + name;
  std::ofstream f(path);
  f << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

int run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv = {"popcorn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("key=value parsing skips comments and blanks") {
  const std::string path = write_tmp("kv.cfg",
                                     "# comment\n"
                                     "env = tiger_irrelevant_noise\n"
                                     "\n"
                                     "lambda = 0.5, 2, 8\n"
                                     "seed=3\n");
  auto kv = cli::parse_kv_file(path);
  CHECK(kv.at("env") == "tiger_irrelevant_noise");
  CHECK(kv.at("lambda") == "0.5, 2, 8");
  CHECK(kv.at("seed") == "3");
  std::remove(path.c_str());
}

TEST_CASE("run config validates modes and grids") {
  std::map<std::string, std::string> kv = {
      {"env", "tiger_missing_data"},
      {"modes", "popcorn,two_stage"},
      {"lambdas", "1,10"},
      {"lambda_esses", "0,4"},
      {"folds", "3"},
      {"seed", "11"}};
  cli::RunConfig rc = cli::RunConfig::from_kv(kv);
  CHECK(rc.modes.size() == 2);
  CHECK(rc.lambdas == std::vector<double>{1.0, 10.0});
  CHECK(rc.lambda_esses == std::vector<double>{0.0, 4.0});
  CHECK(rc.folds == 3);

  kv["folds"] = "0";
  CHECK_THROWS_AS(cli::RunConfig::from_kv(kv), std::invalid_argument);
  kv["folds"] = "3";
  kv["dataset"] = "also_set.jsonl";  // dataset and env are mutually exclusive
  CHECK_THROWS_AS(cli::RunConfig::from_kv(kv), std::invalid_argument);
}

TEST_CASE("fold assignment is deterministic, balanced, and seed-sensitive") {
  auto a = cli::fold_assignments(101, 5, 9);
  auto b = cli::fold_assignments(101, 5, 9);
  auto c = cli::fold_assignments(101, 5, 10);
  CHECK(a == b);
  CHECK(a != c);
  std::vector<int> counts(5, 0);
  for (int f : a) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[f];
  }
  for (int k : counts) CHECK(std::abs(k - 20) <= 1);
}

TEST_CASE("piecewise-linear reward interpolates and clamps") {
  cli::PiecewiseLinearReward r;
  r.dim = 0;
  r.points = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.5}};
  CHECK(r(0.5) == doctest::Approx(0.5));
  CHECK(r(1.5) == doctest::Approx(0.75));
  CHECK(r(-3.0) == doctest::Approx(0.0));   // clamped left
  CHECK(r(10.0) == doctest::Approx(0.5));   // clamped right
  Dataset d;
  d.A = 1;
  d.D = 1;
  Trajectory tr;
  tr.actions = {0, 0};
  tr.rewards = {9.0, 9.0};
  tr.observations = {{0.5}, {1.5}};
  d.trajectories.push_back(tr);
  r.apply(d);
  CHECK(d.trajectories[0].rewards[0] == doctest::Approx(0.5));
  CHECK(d.trajectories[0].rewards[1] == doctest::Approx(0.75));
  // A missing value on the reward dimension is an error, not a silent skip.
  d.trajectories[0].observations[1][0] = kMissing;
  CHECK_THROWS_AS(r.apply(d), std::runtime_error);
}

TEST_CASE("unknown tiger variant is rejected") {
  CHECK_NOTHROW(cli::tiger_variant_from_string("tiger_wrong_likelihood"));
  CHECK_THROWS_AS(cli::tiger_variant_from_string("tiger_bogus"),
                  std::invalid_argument);
}

TEST_CASE("generate and train commands produce the documented artifacts") {
  const std::string dir = "/tmp/popcorn_cli_run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string ds = dir + "/data.jsonl";
  CHECK(run_cli({"generate", "--env", "tiger_irrelevant_noise", "--n", "40",
                 "--seed", "3", "--out", ds}) == cli::kOk);
  Dataset d = load_dataset_jsonl(ds);
  CHECK(d.size() == 40);

  const std::string cfg = write_tmp("train.cfg",
                                    "dataset = " + ds +
                                        "\n"
                                        "K = 2\n"
                                        "modes = two_stage\n"
                                        "out_dir = " + dir + "/out\n"
                                        "seed = 5\n"
                                        "em_max_iters = 15\n"
                                        "restarts = 1\n");
  CHECK(run_cli({"train", "--config", cfg}) == cli::kOk);
  CHECK(fs::exists(dir + "/out/results.csv"));
  CHECK(fs::exists(dir + "/out/manifest.json"));
  const std::string csv1 = slurp(dir + "/out/results.csv");
  CHECK(csv1.find("fold,mode,lambda,lambda_ess,train_loglik_per_scalar") == 0);

  // Re-running the identical command reproduces the metrics byte for byte.
  fs::remove_all(dir + "/out");
  CHECK(run_cli({"train", "--config", cfg}) == cli::kOk);
  CHECK(slurp(dir + "/out/results.csv") == csv1);

  // A checkpoint was written; evaluate reports OPE on the dataset.
  bool found_ck = false;
  for (const auto& e : fs::directory_iterator(dir + "/out"))
    if (e.path().filename().string().rfind("ck_", 0) == 0) found_ck = true;
  CHECK(found_ck);
  std::remove(cfg.c_str());
  fs::remove_all(dir);
}

TEST_CASE("config errors exit with the config-error code") {
  CHECK(run_cli({"train", "--config", "/tmp/definitely_missing.cfg"}) ==
        cli::kConfigError);
}
