#include "popcorn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "popcorn/model.hpp"

namespace popcorn {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

constexpr double kGmmMeans[2] = {0.0, 1.0};
constexpr double kGmmSds[2] = {0.1, 1.0};

// Mass of the equal-weight GMM below zero. Drawing the safe door with this
// probability during data generation makes the observation marginal exactly
// the untruncated GMM; evaluation rollouts still reset the door uniformly.
double gmm_negative_mass() {
  return 0.5 * norm_cdf(-kGmmMeans[0] / kGmmSds[0]) +
         0.5 * norm_cdf(-kGmmMeans[1] / kGmmSds[1]);
}

}  // namespace

void truncated_gmm_moments(bool negative_side, double* mean, double* sd,
                           double* mass) {
  double total_mass = 0.0, m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double m = kGmmMeans[i], s = kGmmSds[i];
    const double beta = -m / s;  // truncation point 0 in standard units
    double mi, comp_mean, comp_var;
    if (negative_side) {
      mi = norm_cdf(beta);
      const double h = norm_pdf(beta) / mi;
      comp_mean = m - s * h;
      comp_var = s * s * (1.0 - beta * h - h * h);
    } else {
      mi = 1.0 - norm_cdf(beta);
      const double g = norm_pdf(beta) / mi;
      comp_mean = m + s * g;
      comp_var = s * s * (1.0 + beta * g - g * g);
    }
    const double w = 0.5 * mi;
    total_mass += w;
    m1 += w * comp_mean;
    m2 += w * (comp_var + comp_mean * comp_mean);
  }
  m1 /= total_mass;
  m2 /= total_mass;
  if (mean) *mean = m1;
  if (sd) *sd = std::sqrt(std::max(m2 - m1 * m1, 1e-12));
  if (mass) *mass = total_mass;
}

TigerSpec tiger_spec(TigerVariant v) {
  TigerSpec s;
  s.variant = v;
  switch (v) {
    case TigerVariant::kIrrelevantNoise:
      s.D_total = 2;
      s.missing_frac = 0.0;
      s.sigma_signal = 0.3;
      s.sigma_noise = 0.1;
      break;
    case TigerVariant::kMissingData:
      s.D_total = 2;
      s.missing_frac = 0.8;
      s.sigma_signal = 0.3;
      s.sigma_noise = 0.3;  // the irrelevant dimension is equally noisy here
      break;
    case TigerVariant::kWrongLikelihood:
      s.D_total = 1;
      s.missing_frac = 0.0;
      break;
  }
  return s;
}

namespace {

// Listen observation for the current episode. safe indexes the safe door,
// j is the episode-fixed mean of the irrelevant dimension.
std::vector<double> tiger_observe(const TigerSpec& spec, int safe, int j,
                                  std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> o(spec.D_total);
  if (spec.variant == TigerVariant::kWrongLikelihood) {
    // Rejection-sample the GMM until the sign matches the safe door.
    std::uniform_int_distribution<int> comp(0, 1);
    for (;;) {
      const int c = comp(rng);
      const double x = kGmmMeans[c] + kGmmSds[c] * n01(rng);
      if ((safe == 0 && x < 0.0) || (safe == 1 && x > 0.0)) {
        o[0] = x;
        break;
      }
    }
    return o;
  }
  o[0] = safe + spec.sigma_signal * n01(rng);
  for (int d = 1; d < spec.D_total; ++d)
    o[d] = j + spec.sigma_noise * n01(rng);
  if (spec.missing_frac > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < spec.missing_frac) o[0] = kMissing;
  }
  return o;
}

double tiger_reward(const TigerSpec& spec, int safe, int action) {
  if (action == kTigerListen) return spec.reward_listen;
  return (action - 1) == safe ? spec.reward_safe : spec.reward_tiger;
}

}  // namespace

Dataset generate_tiger_dataset(const TigerSpec& spec, int n_traj,
                               unsigned seed) {
  Dataset data;
  data.A = 3;
  data.D = spec.D_total;
  data.gamma = spec.gamma;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  const double p0 = spec.variant == TigerVariant::kWrongLikelihood
                        ? gmm_negative_mass()
                        : 0.5;
  for (int n = 0; n < n_traj; ++n) {
    Trajectory tr;
    tr.id = n;
    const int safe = u(rng) < p0 ? 0 : 1;
    const int j = coin(rng);
    for (int t = 0; t < spec.max_steps; ++t) {
      std::vector<double> probs;
      if (t < spec.listen_steps)
        probs = {1.0, 0.0, 0.0};
      else if (t == spec.max_steps - 1)
        probs = {0.0, 0.5, 0.5};
      else
        probs = {0.5, 0.25, 0.25};
      const double r = u(rng);
      int action = 0;
      double acc = 0.0;
      for (int a = 0; a < 3; ++a) {
        acc += probs[a];
        if (r <= acc) {
          action = a;
          break;
        }
      }
      tr.observations.push_back(tiger_observe(spec, safe, j, rng));
      tr.actions.push_back(action);
      tr.behavior_probs.push_back(probs);
      tr.rewards.push_back(tiger_reward(spec, safe, action));
      if (action != kTigerListen) break;
    }
    data.trajectories.push_back(std::move(tr));
  }
  return data;
}

std::vector<double> ModelPolicy::act(const std::vector<double>& obs) {
  if (!have_belief_) {
    belief_.probs = initial_belief(params_, obs, init_action_);
    have_belief_ = true;
  } else {
    belief_.probs = belief_update(params_, belief_.probs, last_action_, obs);
  }
  if (soft_)
    return policy_action_dist_soft(to_alpha_vecs(vf_), belief_.probs,
                                   vf_.temperature);
  return policy_action_dist(vf_, belief_, /*soft=*/false);
}

RolloutStats rollout_evaluate(RolloutPolicy& policy, const TigerSpec& spec,
                              int n_rollouts, unsigned seed, int max_steps) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  
  double sum = 0.0, sum2 = 0.0;
  for (int n = 0; n < n_rollouts; ++n) {
    const int safe = coin(rng);
    const int j = coin(rng);
    policy.reset();
    double ret = 0.0, disc = 1.0;
    // No information before the first listen: step 0 presents an all-missing
    // observation, so a belief-tracking policy starts from its prior.
    std::vector<double> obs(spec.D_total, kMissing);
    for (int t = 0; t < max_steps; ++t) {
      std::vector<double> dist = policy.act(obs);
      const double r = u(rng);
      int action = static_cast<int>(dist.size()) - 1;
      double acc = 0.0;
      for (std::size_t a = 0; a < dist.size(); ++a) {
        acc += dist[a];
        if (r <= acc) {
          action = static_cast<int>(a);
          break;
        }
      }
      policy.tell_action(action);
      ret += disc * tiger_reward(spec, safe, action);
      disc *= spec.gamma;
      if (action != kTigerListen) break;
      obs = tiger_observe(spec, safe, j, rng);
    }
    sum += ret;
    sum2 += ret * ret;
  }
  RolloutStats st;
  st.n = n_rollouts;
  st.mean = sum / n_rollouts;
  const double var =
      std::max(0.0, sum2 / n_rollouts - st.mean * st.mean);
  st.stderr_ = std::sqrt(var / n_rollouts);
  return st;
}

PomdpParams manual_tiger_solution(const TigerSpec& spec) {
  PomdpParams p;
  p.K = 2;
  p.A = 3;
  p.D = spec.D_total;
  p.gamma = spec.gamma;
  
  p.tau0 = {0.5, 0.5};
  p.tau.assign(3 * 2 * 2, 0.0);
  for (int a = 0; a < 3; ++a)
    for (int k = 0; k < 2; ++k)
      for (int k2 = 0; k2 < 2; ++k2)
        p.tau[(a * 2 + k) * 2 + k2] =
            a == kTigerListen ? (k == k2 ? 1.0 : 0.0) : p.tau0[k2];
  p.mu.assign(static_cast<std::size_t>(3) * 2 * p.D, 0.0);
  p.sigma.assign(p.mu.size(), 1.0);
  for (int k = 0; k < 2; ++k) {
    std::vector<double> mean(p.D), sd(p.D);
    if (spec.variant == TigerVariant::kWrongLikelihood) {
      truncated_gmm_moments(k == 0, &mean[0], &sd[0], nullptr);
    } else {
      mean[0] = k;
      sd[0] = spec.sigma_signal;
      for (int d = 1; d < p.D; ++d) {
        // Moment-match the episode-level mixture 1/2 N(0) + 1/2 N(1).
        mean[d] = 0.5;
        sd[d] = std::sqrt(0.25 + spec.sigma_noise * spec.sigma_noise);
      }
    }
    for (int a = 0; a < 3; ++a)
      for (int d = 0; d < p.D; ++d) {
        p.mu[(a * 2 + k) * p.D + d] = mean[d];
        p.sigma[(a * 2 + k) * p.D + d] = sd[d];
      }
  }
  p.reward.assign(2 * 3, 0.0);
  for (int k = 0; k < 2; ++k)
    for (int a = 0; a < 3; ++a)
      p.reward[k * 3 + a] = tiger_reward(spec, k, a);
  return p;
}

namespace {

void enumerate_grid(int K, int res, int dim, int remaining,
                    std::vector<int>& cur,
                    std::vector<std::vector<double>>& out) {
  if (dim == K - 1) {
    cur[dim] = remaining;
    std::vector<double> b(K);
    for (int k = 0; k < K; ++k) b[k] = double(cur[k]) / res;
    out.push_back(std::move(b));
    return;
  }
  for (int c = 0; c <= remaining; ++c) {
    cur[dim] = c;
    enumerate_grid(K, res, dim + 1, remaining - c, cur, out);
  }
}

}  // namespace

double GridValueFunction::value_at(const std::vector<double>& belief) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double d = 0.0;
    for (int k = 0; k < K; ++k) {
      const double diff = grid[i][k] - belief[k];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return values[best];
}

GridValueFunction exact_belief_grid_solve(const DiscretePomdp& m,
                                          int resolution, double tol,
                                          int max_iters) {
  const int K = m.K, A = m.A, Z = m.Z;
  GridValueFunction vf;
  vf.K = K;
  vf.resolution = resolution;
  std::vector<int> cur(K, 0);
  enumerate_grid(K, resolution, 0, resolution, cur, vf.grid);
  vf.values.assign(vf.grid.size(), 0.0);

  std::vector<double> next(vf.values.size());
  for (int it = 0; it < max_iters; ++it) {
    double delta = 0.0;
    for (std::size_t i = 0; i < vf.grid.size(); ++i) {
      const std::vector<double>& b = vf.grid[i];
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double q = 0.0;
        for (int k = 0; k < K; ++k) q += b[k] * m.reward[k * A + a];
        // Predicted next-state distribution.
        std::vector<double> pred(K, 0.0);
        for (int k = 0; k < K; ++k)
          for (int k2 = 0; k2 < K; ++k2)
            pred[k2] += b[k] * m.tau[(a * K + k) * K + k2];
        for (int z = 0; z < Z; ++z) {
          double pz = 0.0;
          std::vector<double> bnext(K);
          for (int k2 = 0; k2 < K; ++k2) {
            bnext[k2] = pred[k2] * m.obsprob[(a * K + k2) * Z + z];
            pz += bnext[k2];
          }
          if (pz <= 0.0) continue;
          for (int k2 = 0; k2 < K; ++k2) bnext[k2] /= pz;
          q += m.gamma * pz * vf.value_at(bnext);
        }
        best = std::max(best, q);
      }
      next[i] = best;
      delta = std::max(delta, std::abs(next[i] - vf.values[i]));
    }
    vf.values = next;
    if (delta < tol) break;
  }
  return vf;
}

}  // namespace popcorn
