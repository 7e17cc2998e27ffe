#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "popcorn/autodiff.hpp"

namespace popcorn {

inline constexpr double kSigmaFloor = 1e-3;

struct Belief {
  std::vector<double> probs;
};

// Full POMDP parameterization: initial distribution, action-conditioned
// transitions, Gaussian emission moments, deterministic reward table.
// Templated so the same accessors serve both plain doubles and tape scalars.
template <class T>
struct ParamsT {
  int K = 0, A = 0, D = 0;
  double gamma = 0.9;
  std::vector<T> tau0;    // [K]
  std::vector<T> tau;     // [A][K][K], row tau(a,j,·) sums to 1
  std::vector<T> mu;      // [A][K][D]
  std::vector<T> sigma;   // [A][K][D]
  std::vector<double> reward;  // [K][A]

  const T& tau_at(int a, int j, int k) const { return tau[(a * K + j) * K + k]; }
  T& tau_at(int a, int j, int k) { return tau[(a * K + j) * K + k]; }
  const T& mu_at(int a, int k, int d) const { return mu[(a * K + k) * D + d]; }
  T& mu_at(int a, int k, int d) { return mu[(a * K + k) * D + d]; }
  const T& sigma_at(int a, int k, int d) const { return sigma[(a * K + k) * D + d]; }
  T& sigma_at(int a, int k, int d) { return sigma[(a * K + k) * D + d]; }
  double reward_at(int k, int a) const { return reward[k * A + a]; }
  double& reward_at(int k, int a) { return reward[k * A + a]; }

  double reward_min() const {
    return *std::min_element(reward.begin(), reward.end());
  }
  double reward_max() const {
    return *std::max_element(reward.begin(), reward.end());
  }
};

using PomdpParams = ParamsT<double>;

// Throws std::invalid_argument when simplex/positivity invariants are broken.
void validate(const PomdpParams& p, double tol = 1e-9);

// Gradient-friendly parameterization: row-wise softmax for probabilities and
// a softplus-with-floor map for sigma. The reward table is carried along
// unchanged; it is never updated by gradients.
struct UnconstrainedParams {
  int K = 0, A = 0, D = 0;
  double gamma = 0.9;
  std::vector<double> tau0_logits;  // [K]
  std::vector<double> tau_logits;   // [A][K][K]
  std::vector<double> mu_raw;       // [A][K][D]
  std::vector<double> sigma_raw;    // [A][K][D]
  std::vector<double> reward;       // [K][A]

  std::size_t flat_size() const {
    return tau0_logits.size() + tau_logits.size() + mu_raw.size() +
           sigma_raw.size();
  }
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);
  // Human-readable name of a flat coordinate, e.g. "tau_logits[a=1,j=0,k=1]".
  std::string coord_name(std::size_t i) const;
};

template <class T>
void softmax_inplace(T* x, int n) {
  double m = scalar_value(x[0]);
  for (int i = 1; i < n; ++i) m = std::max(m, scalar_value(x[i]));
  using std::exp;
  using ad::exp;
  T z(0.0);
  for (int i = 0; i < n; ++i) {
    x[i] = exp(x[i] - T(m));
    z += x[i];
  }
  for (int i = 0; i < n; ++i) x[i] = x[i] / z;
}

// Maps a flat coordinate vector (same layout as UnconstrainedParams::flatten)
/// to a valid ParamsT. T is double for evaluation and ad::Var for gradients.
template <class T>
ParamsT<T> constrain(const UnconstrainedParams& u, const std::vector<T>& flat) {
  const int K = u.K, A = u.A, D = u.D;
  ParamsT<T> p;
  p.K = K;
  p.A = A;
  p.D = D;
  p.gamma = u.gamma;
  p.reward = u.reward;
  std::size_t off = 0;
  p.tau0.assign(flat.begin(), flat.begin() + K);
  softmax_inplace(p.tau0.data(), K);
  off += K;
  p.tau.assign(flat.begin() + off, flat.begin() + off + A * K * K);
  for (int a = 0; a < A; ++a)
    for (int j = 0; j < K; ++j) softmax_inplace(&p.tau[(a * K + j) * K], K);
  off += A * K * K;
  p.mu.assign(flat.begin() + off, flat.begin() + off + A * K * D);
  off += A * K * D;
  p.sigma.resize(A * K * D);
  for (int i = 0; i < A * K * D; ++i)
    p.sigma[i] = T(kSigmaFloor) + softplus(flat[off + i]);
  return p;
}

inline PomdpParams constrain(const UnconstrainedParams& u) {
  return constrain<double>(u, u.flatten());
}

// Inverse map, used for EM warm starts. Probabilities are clamped away from
// zero before taking logs.
UnconstrainedParams unconstrain(const PomdpParams& p);

}  // namespace popcorn
