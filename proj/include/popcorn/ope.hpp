#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "popcorn/autodiff.hpp"
#include "popcorn/trajectory.hpp"

// Off-policy evaluation: CWPDIS value, per-step effective sample sizes,
// the ESS penalty, behavior-support restriction, and a kNN behavior-policy
// estimator for datasets that lack recorded behavior probabilities.
namespace popcorn {

template <class T>
struct OpeResultT {
  T value{0.0};
  std::vector<T> ess_per_step;
  T ess_total{0.0};
  std::vector<std::vector<T>> weights;  // rho_nt, per trajectory up to T_n
  std::vector<char> no_overlap;         // steps whose weight mass vanished
};

using OpeReport = OpeResultT<double>;

// CWPDIS over the dataset: policy_prob_taken[n][t] is the (restricted) policy
// probability of the realized action a_nt. After a trajectory ends its weight
// stays frozen in denominators with reward 0; ESS_t is over live trajectories.
template <class T>
OpeResultT<T> cwpdis(const Dataset& d,
                     const std::vector<std::vector<T>>& policy_prob_taken,
                     double gamma) {
  const int N = d.size();
  const int Tmax = d.max_length();
  OpeResultT<T> r;
  r.ess_per_step.assign(Tmax, T(0.0));
  r.no_overlap.assign(Tmax, 0);
  std::vector<T> rho(N, T(1.0));
  r.weights.resize(N);
  for (int n = 0; n < N; ++n) r.weights[n].reserve(d.trajectories[n].length());
  double disc = 1.0;
  for (int t = 0; t < Tmax; ++t) {
    T num(0.0), den(0.0), live_sum(0.0), live_sq(0.0);
    int n_live = 0;
    for (int n = 0; n < N; ++n) {
      const Trajectory& tr = d.trajectories[n];
      if (t < tr.length()) {
        if (!tr.has_behavior_probs())
          throw std::invalid_argument("cwpdis: trajectory lacks behavior_probs");
        const double pb = tr.behavior_probs[t][tr.actions[t]];
        rho[n] = rho[n] * (policy_prob_taken[n][t] / T(pb));
        num += T(tr.rewards[t]) * rho[n];
        live_sum += rho[n];
        live_sq += rho[n] * rho[n];
        ++n_live;
        r.weights[n].push_back(rho[n]);
      }
      den += rho[n];
    }
    if (n_live > 0 && scalar_value(live_sq) > 0.0)
      r.ess_per_step[t] = live_sum * live_sum / live_sq;
    if (scalar_value(den) > 0.0 && n_live > 0) {
      r.value += T(disc) * num / den;
    } else {
      r.no_overlap[t] = 1;
    }
    r.ess_total += r.ess_per_step[t];
    disc *= gamma;
  }
  return r;
}

// Zeroes policy mass on actions with behavior probability below delta and
// renormalizes; when nothing survives, falls back to the behavior itself.
template <class T>
std::vector<T> restrict_policy_support(const std::vector<T>& policy_dist,
                                       const std::vector<double>& behavior_dist,
                                       double delta,
                                       bool* fell_back = nullptr) {
  if (fell_back) *fell_back = false;
  if (delta <= 0.0) return policy_dist;  // no restriction: exact identity
  std::vector<T> out(policy_dist.size(), T(0.0));
  T z(0.0);
  bool any = false;
  for (std::size_t a = 0; a < policy_dist.size(); ++a) {
    if (behavior_dist[a] >= delta) {
      out[a] = policy_dist[a];
      z += out[a];
      any = true;
    }
  }
  if (!any || !(scalar_value(z) > 0.0)) {
    if (fell_back) *fell_back = true;
    for (std::size_t a = 0; a < policy_dist.size(); ++a)
      out[a] = T(behavior_dist[a]);
    return out;
  }
  for (auto& x : out) x = x / z;
  return out;
}

template <class T>
T ess_penalty(const T& ess_total, double lambda_ess, bool* degenerate = nullptr) {
  if (degenerate) *degenerate = false;
  if (lambda_ess == 0.0) return T(0.0);
  if (!(scalar_value(ess_total) > 0.0)) {
    if (degenerate) *degenerate = true;
    return T(std::numeric_limits<double>::infinity());
  }
  using std::sqrt;
  using ad::sqrt;
  return T(lambda_ess) / sqrt(ess_total);
}

// k-nearest-neighbor behavior policy over caller-supplied per-step feature
// vectors, with a weighted squared-Euclidean distance.
struct BehaviorPolicyModel {
  std::vector<std::vector<double>> features;
  std::vector<int> actions;
  std::vector<double> dist_weights;
  int k_nn = 100;
  double p_floor = 0.03;
  int A = 0;
};

BehaviorPolicyModel fit_knn_behavior(
    const std::vector<std::vector<double>>& features,
    const std::vector<int>& actions, const std::vector<double>& dist_weights,
    int k_nn, double p_floor, int A);

std::vector<double> knn_query(const BehaviorPolicyModel& m,
                              const std::vector<double>& feature);

// Behavior distribution at a stored reference step: neighbor frequencies,
// floored so the realized action keeps at least p_floor probability.
std::vector<double> knn_query_at_reference(const BehaviorPolicyModel& m,
                                           int index);

std::string ope_report_json(const OpeReport& r);

}  // namespace popcorn
