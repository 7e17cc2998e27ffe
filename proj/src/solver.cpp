#include "popcorn/solver.hpp"

#include <algorithm>
#include <cmath>

namespace popcorn {

double ValueFunction::value_at(const Belief& b) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : alphas) {
    double v = 0.0;
    for (std::size_t k = 0; k < b.probs.size(); ++k)
      v += a.values[k] * b.probs[k];
    best = std::max(best, v);
  }
  return best;
}

std::vector<Belief> init_belief_set(int K) {
  if (K < 1) throw std::invalid_argument("init_belief_set: K >= 1 required");
  std::vector<Belief> B;
  B.push_back({std::vector<double>(K, 1.0 / K)});
  if (K == 1) return B;  // the vertex coincides with the uniform point
  for (int k = 0; k < K; ++k) {
    std::vector<double> b(K, 0.01 / (K - 1));
    b[k] = 0.99;
    B.push_back({std::move(b)});
  }
  return B;
}

ValueFunction reset_value_function(const PomdpParams& p, double temperature) {
  ValueFunction vf;
  vf.temperature = temperature;
  vf.beliefs = init_belief_set(p.K);
  AlphaVector lower;
  lower.values.assign(p.K, p.reward_min() / (1.0 - p.gamma));
  lower.action_dist.assign(p.A, 1.0 / p.A);
  vf.alphas.push_back(std::move(lower));
  return vf;
}

namespace {

double dist_to_set(const std::vector<double>& b, const std::vector<Belief>& B) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : B) {
    double d = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      double diff = b[k] - x.probs[k];
      d += diff * diff;
    }
    best = std::min(best, std::sqrt(d));
  }
  return best;
}

int sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

std::vector<Belief> expand_belief_set(const std::vector<Belief>& B,
                                      const PomdpParams& p, double eps_expand,
                                      int max_beliefs, std::mt19937_64& rng) {
  if (B.empty()) throw std::invalid_argument("expand_belief_set: empty set");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> candidates;
  for (const auto& b : B) {
    for (int a = 0; a < p.A; ++a) {
      std::vector<double> pred = predict_belief<double>(p, b.probs, a);
      const int sp = sample_index(pred, rng);
      std::vector<double> obs(p.D);
      for (int d = 0; d < p.D; ++d)
        obs[d] = p.mu_at(a, sp, d) + p.sigma_at(a, sp, d) * normal(rng);
      candidates.push_back(
          belief_update<double>(p, b.probs, a, obs, nullptr, nullptr));
    }
  }
  std::vector<Belief> out = B;
  while (static_cast<int>(out.size()) < max_beliefs) {
    double best_d = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      double d = dist_to_set(candidates[i], out);
      if (d > best_d) {
        best_d = d;
        best_i = i;
      }
    }
    if (best_d <= eps_expand) break;
    out.push_back({candidates[best_i]});
    candidates.erase(candidates.begin() + best_i);
  }
  return out;
}

std::vector<double> draw_meta_normals(int A, int K, int k_obs, int D,
                                      std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(A) * K * k_obs * D);
  for (double& x : z) x = normal(rng);
  return z;
}

std::vector<AlphaVecT<double>> to_alpha_vecs(const ValueFunction& vf) {
  return lift_alpha_vecs<double>(vf.alphas);
}

std::vector<AlphaVector> backup_hard(const std::vector<AlphaVector>& alphas,
                                     const std::vector<Belief>& B,
                                     const PomdpParams& p,
                                     const MetaTableT<double>& table) {
  const int K = p.K, A = p.A;
  const int nA = static_cast<int>(alphas.size());
  // proj[a][j][i](s) = sum_{s'} alpha_i(s') tau(a,s,s') p(O_j | a, s').
  std::vector<std::vector<double>> proj(static_cast<std::size_t>(A) * nA * nA);
  for (int a = 0; a < A; ++a)
    for (int j = 0; j < nA; ++j)
      for (int i = 0; i < nA; ++i) {
        std::vector<double> v(K, 0.0);
        for (int s = 0; s < K; ++s)
          for (int sp = 0; sp < K; ++sp)
            v[s] += alphas[i].values[sp] * p.tau_at(a, s, sp) *
                    table.probs[(static_cast<std::size_t>(a) * K + sp) * nA + j];
        proj[(static_cast<std::size_t>(a) * nA + j) * nA + i] = std::move(v);
      }

  std::vector<AlphaVector> out;
  for (const Belief& b : B) {
    double best_val = -std::numeric_limits<double>::infinity();
    AlphaVector best;
    for (int a = 0; a < A; ++a) {
      std::vector<double> alpha_ab(K);
      for (int s = 0; s < K; ++s) alpha_ab[s] = p.reward_at(s, a);
      for (int j = 0; j < nA; ++j) {
        int arg = 0;
        double arg_val = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < nA; ++i) {
          const auto& v = proj[(static_cast<std::size_t>(a) * nA + j) * nA + i];
          double sc = 0.0;
          for (int k = 0; k < K; ++k) sc += v[k] * b.probs[k];
          if (sc > arg_val) {  // ties favor the lowest index
            arg_val = sc;
            arg = i;
          }
        }
        const auto& v = proj[(static_cast<std::size_t>(a) * nA + j) * nA + arg];
        for (int s = 0; s < K; ++s) alpha_ab[s] += p.gamma * v[s];
      }
      double val = 0.0;
      for (int s = 0; s < K; ++s) val += alpha_ab[s] * b.probs[s];
      if (val > best_val) {
        best_val = val;
        best.values = std::move(alpha_ab);
        best.action_dist.assign(A, 0.0);
        best.action_dist[a] = 1.0;
      }
    }
    // Merge duplicates (L-inf distance below 1e-9).
    bool dup = false;
    for (const auto& e : out) {
      double dmax = 0.0;
      for (int s = 0; s < K; ++s)
        dmax = std::max(dmax, std::abs(e.values[s] - best.values[s]));
      if (dmax < 1e-9) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(std::move(best));
  }
  return out;
}

std::vector<double> policy_action_dist(const ValueFunction& vf,
                                       const Belief& b, bool soft) {
  const int A = static_cast<int>(vf.alphas[0].action_dist.size());
  if (soft) {
    std::vector<double> belief(b.probs);
    return policy_action_dist_soft(to_alpha_vecs(vf), belief, vf.temperature);
  }
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vf.alphas.size(); ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < b.probs.size(); ++k)
      v += vf.alphas[i].values[k] * b.probs[k];
    if (v > best_v) {
      best_v = v;
      best = static_cast<int>(i);
    }
  }
  std::vector<double> dist(A, 0.0);
  int act = 0;
  for (int a = 1; a < A; ++a)
    if (vf.alphas[best].action_dist[a] > vf.alphas[best].action_dist[act])
      act = a;
  dist[act] = 1.0;
  return dist;
}

ValueFunction solve_hard(const PomdpParams& p, double temperature, int k_obs,
                         int max_sweeps, double tol, double eps_expand,
                         int max_beliefs, int expand_every,
                         std::mt19937_64& rng) {
  ValueFunction vf = reset_value_function(p, temperature);
  std::vector<double> z = draw_meta_normals(p.A, p.K, k_obs, p.D, rng);
  std::vector<double> prev(vf.beliefs.size(), 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (expand_every > 0 && sweep > 0 && sweep % expand_every == 0)
      vf.beliefs = expand_belief_set(vf.beliefs, p, eps_expand, max_beliefs, rng);
    auto alphas = to_alpha_vecs(vf);
    MetaTableT<double> table = build_meta_table(
        alphas, vf.beliefs, p, z, k_obs, /*soft=*/false, temperature);
    vf.alphas = backup_hard(vf.alphas, vf.beliefs, p, table);
    std::vector<double> cur(vf.beliefs.size());
    double diff = 0.0;
    for (std::size_t i = 0; i < vf.beliefs.size(); ++i) {
      cur[i] = vf.value_at(vf.beliefs[i]);
      if (i < prev.size()) diff = std::max(diff, std::abs(cur[i] - prev[i]));
      else diff = std::numeric_limits<double>::infinity();
    }
    prev = std::move(cur);
    if (sweep > 0 && diff < tol) break;
  }
  return vf;
}

}  // namespace popcorn
