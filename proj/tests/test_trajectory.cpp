#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "popcorn/trajectory.hpp"

using namespace popcorn;

TEST_CASE("JSONL round-trip reproduces values bitwise, including missing") {
  std::mt19937_64 rng(17);
  PomdpParams p = test::random_params(2, 3, 2, rng);
  Dataset d = test::sample_dataset(p, 12, 9, rng, /*missing_frac=*/0.4);
  const std::string path = "/tmp/popcorn_test_ds.jsonl";
  save_dataset_jsonl(path, d);
  Dataset back = load_dataset_jsonl(path);
  REQUIRE(back.size() == d.size());
  CHECK(back.A == d.A);
  CHECK(back.D == d.D);
  CHECK(back.gamma == d.gamma);
  for (int n = 0; n < d.size(); ++n) {
    const Trajectory &a = d.trajectories[n], &b = back.trajectories[n];
    CHECK(a.actions == b.actions);
    CHECK(a.rewards == b.rewards);
    CHECK(a.behavior_probs == b.behavior_probs);
    REQUIRE(a.observations.size() == b.observations.size());
    for (std::size_t t = 0; t < a.observations.size(); ++t)
      for (std::size_t dd = 0; dd < a.observations[t].size(); ++dd) {
        if (is_missing(a.observations[t][dd]))
          CHECK(is_missing(b.observations[t][dd]));
        else
          CHECK(a.observations[t][dd] == b.observations[t][dd]);
      }
  }
  // Saving the reloaded dataset is byte-identical to the first file.
  const std::string path2 = "/tmp/popcorn_test_ds2.jsonl";
  save_dataset_jsonl(path2, back);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("validate rejects malformed trajectories") {
  std::mt19937_64 rng(19);
  PomdpParams p = test::random_params(2, 2, 1, rng);
  Dataset d = test::sample_dataset(p, 2, 4, rng);
  CHECK_NOTHROW(validate(d));

  Dataset bad = d;
  bad.trajectories[0].actions[1] = 5;  // out of range
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  bad = d;
  bad.trajectories[1].rewards.pop_back();  // length mismatch
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  bad = d;
  bad.trajectories[0].behavior_probs[0] = {0.9, 0.9};  // not a simplex
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("observed scalar count skips missing entries") {
  Dataset d;
  d.A = 1;
  d.D = 2;
  Trajectory tr;
  tr.actions = {0, 0};
  tr.rewards = {0.0, 0.0};
  tr.observations = {{1.0, kMissing}, {kMissing, kMissing}};
  d.trajectories.push_back(tr);
  CHECK(d.observed_scalar_count() == 1);
  CHECK(d.max_length() == 2);
}
