#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "popcorn/model.hpp"
#include "popcorn/ope.hpp"
#include "popcorn/solver.hpp"

// Composition of the training objective: rescaled likelihood plus the
// lambda-weighted, ESS-penalized off-policy policy value, its exact gradient
// via the tape, Rprop ascent with random restarts, and the 2-stage baseline.
namespace popcorn {

enum class Mode { kPopcorn, kTwoStage, kValueOnly };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct ObjectiveConfig {
  double lambda = 1.0;
  double lambda_ess = 0.0;
  double delta = 0.0;
  Mode mode = Mode::kPopcorn;
  int backups_per_step = 3;
  int reset_period = 500;
  int expand_period = 25;
  int k_obs = 100;
  int max_beliefs = 20;
  double eps_expand = 0.1;
  double temperature = 0.01;
  int restarts = 25;
  int max_iters = 2000;
  unsigned seed = 0;
  int init_action = 0;
  bool warm_start_em = false;
  int warm_start_iters = 20;
  // Early stop: objective gain below stall_tol over stall_window iterations.
  double stall_tol = 1e-7;
  int stall_window = 50;
  // EM settings for the 2-stage pipeline.
  int em_max_iters = 200;
  double em_tol = 1e-6;
  int pbvi_max_sweeps = 60;
  double pbvi_tol = 1e-5;
};

struct ObjectiveValue {
  double total = 0.0;
  double loglik_rescaled = 0.0;
  double policy_value = 0.0;
  double ess_total = 0.0;
};

// Cached PBVI state carried across gradient iterations.
struct SolverState {
  ValueFunction vf;
  std::vector<double> meta_z;  // fixed normal draws for the meta table
};

SolverState make_solver_state(const PomdpParams& p,
                              const ObjectiveConfig& cfg,
                              std::mt19937_64& rng);

// Evaluates the objective at the given flat unconstrained coordinates,
// without mutating the solver state. When out_alphas is non-null the
// post-backup alpha-vectors are returned (used to advance the cache).
template <class T>
struct ObjectiveValueT {
  T total{0.0};
  T loglik_rescaled{0.0};
  T policy_value{0.0};
  T ess_total{0.0};
};

template <class T>
ObjectiveValueT<T> evaluate_objective_t(
    const UnconstrainedParams& shape, const std::vector<T>& flat,
    const Dataset& data, const ObjectiveConfig& cfg, const SolverState& state,
    std::vector<AlphaVecT<T>>* out_alphas = nullptr);

ObjectiveValue evaluate_objective(const UnconstrainedParams& params,
                                  const Dataset& data,
                                  const ObjectiveConfig& cfg,
                                  const SolverState& state);

// Exact gradient of the objective w.r.t. all unconstrained coordinates
// (reward excluded by construction). Also reports the objective value.
std::vector<double> objective_gradient(const UnconstrainedParams& params,
                                       const Dataset& data,
                                       const ObjectiveConfig& cfg,
                                       const SolverState& state,
                                       ObjectiveValue* value = nullptr);

// Sign-based Rprop (eta+ 1.2, eta- 0.5, steps in [1e-6, 1], initial 0.01),
// ascent direction.
struct RpropState {
  std::vector<double> step;
  std::vector<double> prev_grad;
  explicit RpropState(std::size_t n) : step(n, 0.01), prev_grad(n, 0.0) {}
};

void rprop_step(std::vector<double>& params, const std::vector<double>& grad,
                RpropState& state);

struct TraceRow {
  int iter = 0;
  double loglik_rescaled = 0.0;
  double policy_value = 0.0;
  double ess_total = 0.0;
  double total = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  PomdpParams params;
  UnconstrainedParams unconstrained;
  ValueFunction vf;
  ObjectiveValue final_value;
  std::vector<TraceRow> trace;  // best restart
  int best_restart = -1;
  std::vector<double> restart_totals;
};

// Data-driven initialization: k-means++ emission centers, empirical spreads,
// near-uniform transition logits, zero rewards.
UnconstrainedParams init_params(const Dataset& data, int K, double gamma,
                                int init_action, std::mt19937_64& rng);

using TraceCallback = std::function<void(int restart, const TraceRow&)>;

// Full gradient-ascent training loop: per restart, Rprop on the objective with
// the reward table re-estimated by EM alongside every update, periodic belief
// expansion and hard resets; returns the restart with the best final total.
TrainResult train(const Dataset& data, int K, const ObjectiveConfig& cfg,
                  const TraceCallback& on_trace = nullptr);

// 2-stage baseline: EM to convergence (including the reward M-step), then
// hard-mode PBVI to convergence on the fixed model.
TrainResult two_stage_train(const Dataset& data, int K,
                            const ObjectiveConfig& cfg);

}  // namespace popcorn
