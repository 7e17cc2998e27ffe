#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "popcorn/params.hpp"
#include "popcorn/trajectory.hpp"

// IO-HMM generative model: belief filtering, marginal likelihood with missing
// data, forward-backward smoothing, EM updates, reward estimation, and
// model-based observation forecasting.
//
// Emission convention: the observation at step t is conditioned on the action
// taken at t-1; at t=0 a reserved initial action index (default 0) is used.
namespace popcorn {

inline constexpr double kLog2Pi = 1.8378770664093453;

// Sum of Gaussian log-densities over the observed entries of obs.
template <class T>
T emission_loglik(const ParamsT<T>& p, int a, int k,
                  const std::vector<double>& obs) {
  using std::log;
  using ad::log;
  T ll(0.0);
  for (int d = 0; d < p.D; ++d) {
    const double o = obs[d];
    if (is_missing(o)) continue;
    const T& s = p.sigma_at(a, k, d);
    T z = (T(o) - p.mu_at(a, k, d)) / s;
    ll += T(-0.5) * z * z - log(s) - T(0.5 * kLog2Pi);
  }
  return ll;
}

// One filtering step shared by belief updates and the scaled forward pass:
// weights the predicted distribution by emission likelihoods (stabilized by
// a max-log shift) and normalizes. Appends log of the normalizer to loglik.
// Returns false on underflow, in which case the normalized prediction is kept.
template <class T>
bool weigh_and_normalize(const ParamsT<T>& p, int emit_action,
                         const std::vector<double>& obs, std::vector<T>& pred,
                         T* loglik) {
  const int K = p.K;
  std::vector<T> ll(K);
  double shift = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    ll[k] = emission_loglik(p, emit_action, k, obs);
    shift = std::max(shift, scalar_value(ll[k]));
  }
  using std::exp;
  using std::log;
  using ad::exp;
  using ad::log;
  std::vector<T> post(K);
  T mass(0.0);
  for (int k = 0; k < K; ++k) {
    post[k] = pred[k] * exp(ll[k] - T(shift));
    mass += post[k];
  }
  if (!(scalar_value(mass) >= 1e-300)) {
    // Observation inconsistent with the model: fall back to the prediction.
    T z(0.0);
    for (int k = 0; k < K; ++k) z += pred[k];
    for (int k = 0; k < K; ++k) pred[k] = pred[k] / z;
    return false;
  }
  for (int k = 0; k < K; ++k) pred[k] = post[k] / mass;
  if (loglik) *loglik += log(mass) + T(shift);
  return true;
}

template <class T>
std::vector<T> predict_belief(const ParamsT<T>& p, const std::vector<T>& b,
                              int action) {
  std::vector<T> pred(p.K, T(0.0));
  for (int j = 0; j < p.K; ++j)
    for (int k = 0; k < p.K; ++k)
      pred[k] += b[j] * p.tau_at(action, j, k);
  return pred;
}

// Posterior over s_0 given the first observation (initial-action convention).
template <class T>
std::vector<T> initial_belief(const ParamsT<T>& p,
                              const std::vector<double>& obs0, int init_action,
                              T* loglik = nullptr, bool* underflow = nullptr) {
  std::vector<T> b(p.tau0.begin(), p.tau0.end());
  bool ok = weigh_and_normalize(p, init_action, obs0, b, loglik);
  if (underflow) *underflow = !ok;
  return b;
}

template <class T>
std::vector<T> belief_update(const ParamsT<T>& p, const std::vector<T>& b,
                             int action, const std::vector<double>& obs,
                             T* loglik = nullptr, bool* underflow = nullptr) {
  std::vector<T> pred = predict_belief(p, b, action);
  bool ok = weigh_and_normalize(p, action, obs, pred, loglik);
  if (underflow) *underflow = !ok;
  return pred;
}

Belief belief_update(const PomdpParams& p, const Belief& b, int action,
                     const std::vector<double>& obs,
                     bool* underflow = nullptr);

template <class T>
struct FilterResult {
  std::vector<std::vector<T>> beliefs;  // [T][K], posterior after each obs
  T loglik{0.0};
  bool underflow = false;
};

// Scaled forward pass over a whole trajectory.
template <class T>
FilterResult<T> filter_trajectory(const ParamsT<T>& p, const Trajectory& tr,
                                  int init_action = 0) {
  FilterResult<T> r;
  const int Tn = tr.length();
  r.beliefs.reserve(Tn);
  bool uf = false;
  std::vector<T> b =
      initial_belief(p, tr.observations[0], init_action, &r.loglik, &uf);
  r.underflow |= uf;
  r.beliefs.push_back(b);
  for (int t = 1; t < Tn; ++t) {
    b = belief_update(p, b, tr.actions[t - 1], tr.observations[t], &r.loglik,
                      &uf);
    r.underflow |= uf;
    r.beliefs.push_back(b);
  }
  return r;
}

// Dataset log marginal likelihood. The OpenMP kernel computes per-trajectory
// terms in parallel and reduces them in index order; the serial variant is
// the reference used to cross-check it.
double log_marginal_likelihood(const Dataset& d, const PomdpParams& p,
                               int init_action = 0);
double log_marginal_likelihood_serial(const Dataset& d, const PomdpParams& p,
                                      int init_action = 0);

struct Posteriors {
  std::vector<std::vector<double>> gamma;          // [T][K]
  std::vector<std::vector<double>> xi;             // [T-1][K*K]
  double loglik = 0.0;
};

Posteriors forward_backward(const PomdpParams& p, const Trajectory& tr,
                            int init_action = 0);

// One full E+M step on tau0, tau, mu, sigma and the reward table.
// Parameters of (state, action) cells with zero expected count are kept.
PomdpParams em_step(const Dataset& d, const PomdpParams& p,
                    int init_action = 0);

// Least-squares reward table from state posteriors; unvisited (k,a) cells are
// set to 0 and flagged through `unvisited` when provided.
std::vector<double> learn_rewards(const Dataset& d, const PomdpParams& p,
                                  int init_action = 0,
                                  std::vector<char>* unvisited = nullptr);

// Filters the belief on the prefix, then rolls it through tau under the given
// future actions; prediction h is E[o] = sum_k b_k mu[a_h][k][.].
std::vector<std::vector<double>> forecast(const PomdpParams& p,
                                          const Trajectory& prefix,
                                          const std::vector<int>& future_actions,
                                          int horizon, int init_action = 0);

}  // namespace popcorn
