#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "popcorn/model.hpp"
#include "popcorn/params.hpp"
#include "popcorn/trajectory.hpp"

// Shared oracles and fixture builders. Everything here is deliberately naive
// (path enumeration, dense loops) so it can serve as an independent check on
// the optimized library code.
namespace popcorn::test {

// Log marginal likelihood of one trajectory by summing over every latent
// state path. Exponential in T; only for tiny instances.
inline double brute_force_loglik(const PomdpParams& p, const Trajectory& tr,
                                 int init_action = 0) {
  const int T = tr.length();
  const int K = p.K;
  std::vector<int> path(T, 0);
  double total = -std::numeric_limits<double>::infinity();
  const long n_paths = static_cast<long>(std::pow(K, T));
  for (long idx = 0; idx < n_paths; ++idx) {
    long rem = idx;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % K);
      rem /= K;
    }
    double lp = std::log(p.tau0[path[0]]);
    for (int t = 1; t < T; ++t)
      lp += std::log(p.tau_at(tr.actions[t - 1], path[t - 1], path[t]));
    for (int t = 0; t < T; ++t) {
      const int a = t == 0 ? init_action : tr.actions[t - 1];
      for (int d = 0; d < p.D; ++d) {
        const double o = tr.observations[t][d];
        if (is_missing(o)) continue;
        const double mu = p.mu_at(a, path[t], d);
        const double sg = p.sigma_at(a, path[t], d);
        lp += -0.5 * std::log(2.0 * M_PI) - std::log(sg) -
              0.5 * (o - mu) * (o - mu) / (sg * sg);
      }
    }
    total = total > lp ? total + std::log1p(std::exp(lp - total))
                       : lp + std::log1p(std::exp(total - lp));
  }
  return total;
}

inline double brute_force_loglik(const PomdpParams& p, const Dataset& d,
                                 int init_action = 0) {
  double s = 0.0;
  for (const auto& tr : d.trajectories)
    s += brute_force_loglik(p, tr, init_action);
  return s;
}

// Random valid model with simplex rows and positive sigmas.
inline PomdpParams random_params(int K, int A, int D, std::mt19937_64& rng,
                                 double gamma = 0.9) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  PomdpParams p;
  p.K = K;
  p.A = A;
  p.D = D;
  p.gamma = gamma;
  auto simplex = [&](double* row, int len) {
    double z = 0.0;
    for (int i = 0; i < len; ++i) {
      row[i] = u(rng);
      z += row[i];
    }
    for (int i = 0; i < len; ++i) row[i] /= z;
  };
  p.tau0.resize(K);
  simplex(p.tau0.data(), K);
  p.tau.resize(A * K * K);
  for (int a = 0; a < A; ++a)
    for (int j = 0; j < K; ++j) simplex(&p.tau[(a * K + j) * K], K);
  p.mu.resize(A * K * D);
  p.sigma.resize(A * K * D);
  for (int i = 0; i < A * K * D; ++i) {
    p.mu[i] = n(rng);
    p.sigma[i] = 0.3 + u(rng);
  }
  p.reward.resize(K * A);
  for (auto& r : p.reward) r = n(rng);
  return p;
}

// Random dataset sampled from the model itself, with optional missing masks.
inline Dataset sample_dataset(const PomdpParams& p, int n_traj, int T,
                              std::mt19937_64& rng, double missing_frac = 0.0,
                              int init_action = 0) {
  Dataset d;
  d.A = p.A;
  d.D = p.D;
  d.gamma = p.gamma;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  auto draw = [&](const double* probs, int len) {
    double r = u(rng), c = 0.0;
    for (int i = 0; i < len; ++i) {
      c += probs[i];
      if (r <= c) return i;
    }
    return len - 1;
  };
  for (int i = 0; i < n_traj; ++i) {
    Trajectory tr;
    tr.id = i;
    int s = draw(p.tau0.data(), p.K);
    int prev_a = init_action;
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        prev_a = tr.actions[t - 1];
        s = draw(&p.tau[(prev_a * p.K + s) * p.K], p.K);
      }
      std::vector<double> obs(p.D);
      for (int dd = 0; dd < p.D; ++dd) {
        obs[dd] = u(rng) < missing_frac
                      ? kMissing
                      : p.mu_at(prev_a, s, dd) + p.sigma_at(prev_a, s, dd) * n(rng);
      }
      tr.observations.push_back(obs);
      const int a = static_cast<int>(u(rng) * p.A) % p.A;
      tr.actions.push_back(a);
      tr.rewards.push_back(p.reward_at(s, a));
      tr.behavior_probs.push_back(std::vector<double>(p.A, 1.0 / p.A));
    }
    d.trajectories.push_back(std::move(tr));
  }
  return d;
}

}  // namespace popcorn::test
