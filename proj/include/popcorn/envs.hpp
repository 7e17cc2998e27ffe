#pragma once

#include <memory>
#include <random>
#include <vector>

#include "popcorn/params.hpp"
#include "popcorn/solver.hpp"
#include "popcorn/trajectory.hpp"

// The tiger benchmark environments, Monte Carlo policy evaluation, and the
// belief-grid value-iteration oracle used to test PBVI.
namespace popcorn {

enum class TigerVariant { kIrrelevantNoise, kMissingData, kWrongLikelihood };

struct TigerSpec {
  TigerVariant variant = TigerVariant::kIrrelevantNoise;
  int D_total = 2;            // 1 for wrong_likelihood
  double missing_frac = 0.8;  // missing_data only
  double gamma = 0.9;
  double reward_tiger = -5.0;
  double reward_safe = 1.0;
  double reward_listen = -0.1;
  double sigma_signal = 0.3;
  double sigma_noise = 0.1;
  int listen_steps = 5;   // forced listens at the start of every episode
  int max_steps = 15;     // hard cap; a door is forced open at the last step
};

// Actions: 0 = listen, 1 = open door 0, 2 = open door 1. States index the
// safe door. Episodes end when a door is opened.
inline constexpr int kTigerListen = 0;

TigerSpec tiger_spec(TigerVariant v);

// Exact behavior probabilities are stored in every trajectory: forced listens,
// then (1/2 listen, 1/4 each door), then a uniform forced opening at the cap.
Dataset generate_tiger_dataset(const TigerSpec& spec, int n_traj,
                               unsigned seed);

// A policy being rolled out; stateful within an episode.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual void reset() = 0;
  // Observation for the current step; returns a distribution over actions.
  virtual std::vector<double> act(const std::vector<double>& obs) = 0;
  // Called with the action the environment actually sampled from act()'s dist.
  virtual void tell_action(int /*a*/) {}
};

class ModelPolicy : public RolloutPolicy {
 public:
  ModelPolicy(PomdpParams params, ValueFunction vf, bool soft,
              int init_action = 0)
      : params_(std::move(params)), vf_(std::move(vf)), soft_(soft),
        init_action_(init_action) {}
  void reset() override { have_belief_ = false; last_action_ = init_action_; }
  std::vector<double> act(const std::vector<double>& obs) override;
  void tell_action(int a) override { last_action_ = a; }
  const Belief& belief() const { return belief_; }

 private:
  PomdpParams params_;
  ValueFunction vf_;
  bool soft_;
  int init_action_;
  bool have_belief_ = false;
  Belief belief_;
  int last_action_ = 0;
};

struct RolloutStats {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

RolloutStats rollout_evaluate(RolloutPolicy& policy, const TigerSpec& spec,
                              int n_rollouts, unsigned seed,
                              int max_steps = 100);

// Small discrete-observation POMDP for the grid oracle.
struct DiscretePomdp {
  int K = 0, A = 0, Z = 0;
  double gamma = 0.9;
  std::vector<double> tau;      // [A][K][K]
  std::vector<double> obsprob;  // [A][K][Z], p(o=z | s'=k, a)
  std::vector<double> reward;   // [K][A]
};

struct GridValueFunction {
  int K = 0;
  int resolution = 0;  // points per simplex edge
  std::vector<std::vector<double>> grid;  // belief at each grid point
  std::vector<double> values;
  double value_at(const std::vector<double>& belief) const;  // nearest point
};

// Value iteration on a regular belief grid with nearest-point lookup,
// iterated to sup-norm tolerance. Only intended for K <= 3, A <= 3.
GridValueFunction exact_belief_grid_solve(const DiscretePomdp& pomdp,
                                          int resolution,
                                          double tol = 1e-6,
                                          int max_iters = 10000);

// Moment-matched oracle-state solution (Appendix-style manual model):
// identity listen transitions, door-reset open transitions, true rewards.
PomdpParams manual_tiger_solution(const TigerSpec& spec);

// Moments of a Gaussian mixture truncated to one side of zero; used by the
// wrong-likelihood variant and its manual solution.
void truncated_gmm_moments(bool negative_side, double* mean, double* sd,
                           double* mass);

}  // namespace popcorn
