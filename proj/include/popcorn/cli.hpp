#pragma once

#include <map>
#include <string>
#include <vector>

#include "popcorn/checkpoint.hpp"
#include "popcorn/envs.hpp"
#include "popcorn/objective.hpp"
#include "popcorn/ope.hpp"

// Operator-facing command-line surface. Kept header-visible so tests can
// drive the same code paths the binary does.
namespace popcorn::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kNumericalError = 3;
inline constexpr int kPartialRun = 4;

// Flat key=value config document ('#' comments, blank lines ignored).
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct RunConfig {
  std::string dataset;  // JSONL path, or empty when env is set
  std::string env;      // tiger_irrelevant_noise | tiger_missing_data |
                        // tiger_wrong_likelihood
  int n_traj = 1000;
  int K = 2;
  std::vector<std::string> modes = {"popcorn"};
  std::vector<double> lambdas = {1.0};
  std::vector<double> lambda_esses = {0.0};
  double delta = 0.0;
  int folds = 1;
  std::string out_dir = "run";
  unsigned seed = 0;
  ObjectiveConfig objective;  // shared settings; lambda/mode filled per cell

  static RunConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Piecewise-linear reward over one observation dimension, clamped outside
// the breakpoint range; used to attach rewards on ingestion.
struct PiecewiseLinearReward {
  int dim = 0;
  std::vector<std::pair<double, double>> points;  // (x, r), x increasing
  double operator()(double x) const;
  void apply(Dataset& d) const;
  static PiecewiseLinearReward load(const std::string& path);
};

// Deterministic fold assignment: shuffle under seed, round-robin. Returns
// fold index per trajectory.
std::vector<int> fold_assignments(int n, int folds, unsigned seed);

// Soft-policy CWPDIS of a trained model against a dataset.
OpeReport evaluate_policy_ope(const PomdpParams& p, const ValueFunction& vf,
                              const Dataset& d, double delta,
                              int init_action = 0);

TigerVariant tiger_variant_from_string(const std::string& s);

int run(int argc, const char* const* argv);

}  // namespace popcorn::cli
