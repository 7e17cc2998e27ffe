#pragma once

#include <random>
#include <vector>

#include "popcorn/model.hpp"
#include "popcorn/params.hpp"

// Point-based value iteration over the learned model. Hard mode (argmax
// backups, one action per alpha-vector) is used for final planning and as the
// reference; soft mode replaces every argmax with a temperature softmax so the
// whole backup is differentiable in the model parameters.
//
// Continuous observations are handled by the sampled meta-observation
// approximation: per (action, next state) we draw k_obs observations and
// attribute their mass to alpha-vectors by which one would be maximal for the
// updated belief, from the perspective of each stored belief point.
namespace popcorn {

struct AlphaVector {
  std::vector<double> values;       // [K]
  std::vector<double> action_dist;  // [A], one-hot in hard mode
};

struct ValueFunction {
  std::vector<AlphaVector> alphas;
  std::vector<Belief> beliefs;
  double temperature = 0.01;

  double value_at(const Belief& b) const;  // upper envelope max_a alpha.b
};

// Uniform belief plus one near-vertex belief per state (0.99 mass, remainder
// spread uniformly); K=1 degenerates to the single point (1).
std::vector<Belief> init_belief_set(int K);

// Fresh belief set and a single lower-bound alpha at r_min/(1-gamma).
ValueFunction reset_value_function(const PomdpParams& p, double temperature);

// Samples successor beliefs b^{a,o} of every stored belief and greedily adds
// those farther than eps_expand (L2) from the set, farthest first, until
// max_beliefs is reached.
std::vector<Belief> expand_belief_set(const std::vector<Belief>& B,
                                      const PomdpParams& p, double eps_expand,
                                      int max_beliefs, std::mt19937_64& rng);

template <class T>
struct AlphaVecT {
  std::vector<T> values;
  std::vector<T> action_dist;
};

template <class T>
struct MetaTableT {
  std::vector<T> probs;  // [A][K][n_alpha], rows over alphas sum to 1
  int n_alpha = 0;
  int k_obs = 0;
};

// Standard normal draws for the meta-observation sampler, fixed per training
// run so the objective is a deterministic function of theta between resets.
std::vector<double> draw_meta_normals(int A, int K, int k_obs, int D,
                                      std::mt19937_64& rng);

template <class T>
MetaTableT<T> build_meta_table(const std::vector<AlphaVecT<T>>& alphas,
                               const std::vector<Belief>& B,
                               const ParamsT<T>& p,
                               const std::vector<double>& z, int k_obs,
                               bool soft, double temperature);

template <class T>
std::vector<AlphaVecT<T>> backup_soft(const std::vector<AlphaVecT<T>>& alphas,
                                      const std::vector<Belief>& B,
                                      const ParamsT<T>& p,
                                      const MetaTableT<T>& table,
                                      double temperature);

std::vector<AlphaVector> backup_hard(const std::vector<AlphaVector>& alphas,
                                     const std::vector<Belief>& B,
                                     const PomdpParams& p,
                                     const MetaTableT<double>& table);

// Soft mode: softmax over alpha scores mixed into the per-alpha action
// distributions. Hard mode: one-hot action of the maximizing alpha.
template <class T>
std::vector<T> policy_action_dist_soft(const std::vector<AlphaVecT<T>>& alphas,
                                       const std::vector<T>& belief,
                                       double temperature);
std::vector<double> policy_action_dist(const ValueFunction& vf,
                                       const Belief& b, bool soft);

// Convenience converters between the double-valued ValueFunction state and
// the templated backup representation.
std::vector<AlphaVecT<double>> to_alpha_vecs(const ValueFunction& vf);
template <class T>
std::vector<AlphaVecT<T>> lift_alpha_vecs(const std::vector<AlphaVector>& a);

// Runs hard-mode PBVI to convergence on a fixed model: alternates meta-table
// rebuilds and backups, expanding the belief set every expand_every sweeps.
ValueFunction solve_hard(const PomdpParams& p, double temperature, int k_obs,
                         int max_sweeps, double tol, double eps_expand,
                         int max_beliefs, int expand_every,
                         std::mt19937_64& rng);

// ---- implementation of templated pieces ----

template <class T>
std::vector<AlphaVecT<T>> lift_alpha_vecs(const std::vector<AlphaVector>& a) {
  std::vector<AlphaVecT<T>> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i].values.assign(a[i].values.begin(), a[i].values.end());
    out[i].action_dist.assign(a[i].action_dist.begin(), a[i].action_dist.end());
  }
  return out;
}

template <class T>
std::vector<T> softmax_scores(const std::vector<T>& scores, double temperature) {
  std::vector<T> p(scores.size());
  double m = scalar_value(scores[0]);
  for (std::size_t i = 1; i < scores.size(); ++i)
    m = std::max(m, scalar_value(scores[i]));
  using std::exp;
  using ad::exp;
  T z(0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = exp((scores[i] - T(m)) / T(temperature));
    z += p[i];
  }
  for (auto& x : p) x = x / z;
  return p;
}

template <class T>
MetaTableT<T> build_meta_table(const std::vector<AlphaVecT<T>>& alphas,
                               const std::vector<Belief>& B,
                               const ParamsT<T>& p,
                               const std::vector<double>& z, int k_obs,
                               bool soft, double temperature) {
  if (k_obs < 1) throw std::invalid_argument("meta table needs k_obs >= 1");
  const int K = p.K, A = p.A, D = p.D;
  const int nA = static_cast<int>(alphas.size());
  MetaTableT<T> table;
  table.n_alpha = nA;
  table.k_obs = k_obs;
  table.probs.assign(static_cast<std::size_t>(A) * K * nA, T(0.0));

  // Predicted beliefs b tau_a for every stored belief, shared by all samples.
  std::vector<std::vector<std::vector<T>>> pred(B.size());
  for (std::size_t bi = 0; bi < B.size(); ++bi) {
    pred[bi].resize(A);
    std::vector<T> b(B[bi].probs.begin(), B[bi].probs.end());
    for (int a = 0; a < A; ++a) pred[bi][a] = predict_belief(p, b, a);
  }

  using std::exp;
  using ad::exp;
  std::vector<double> obs(D);
  std::vector<T> w(K), post(K), scores(nA);
  for (int a = 0; a < A; ++a) {
    for (int sp = 0; sp < K; ++sp) {
      T* row = &table.probs[(static_cast<std::size_t>(a) * K + sp) * nA];
      for (int m = 0; m < k_obs; ++m) {
        // Reparameterized sample o = mu + sigma * z keeps the table
        // differentiable in the emission parameters.
        std::vector<T> o_t(D);
        for (int d = 0; d < D; ++d) {
          const double zd = z[((static_cast<std::size_t>(a) * K + sp) * k_obs + m) * D + d];
          o_t[d] = p.mu_at(a, sp, d) + p.sigma_at(a, sp, d) * T(zd);
          obs[d] = scalar_value(o_t[d]);
        }
        // Emission weights at the sampled point, for every candidate state.
        std::vector<T> ll(K);
        double shift = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
          T acc(0.0);
          for (int d = 0; d < D; ++d) {
            const T& s = p.sigma_at(a, k, d);
            T dz = (o_t[d] - p.mu_at(a, k, d)) / s;
            using std::log;
            using ad::log;
            acc += T(-0.5) * dz * dz - log(s);
          }
          ll[k] = acc;
          shift = std::max(shift, scalar_value(acc));
        }
        for (int k = 0; k < K; ++k) w[k] = exp(ll[k] - T(shift));

        for (std::size_t bi = 0; bi < B.size(); ++bi) {
          T mass(0.0);
          for (int k = 0; k < K; ++k) {
            post[k] = pred[bi][a][k] * w[k];
            mass += post[k];
          }
          if (!(scalar_value(mass) > 0)) continue;
          for (int i = 0; i < nA; ++i) {
            T s(0.0);
            for (int k = 0; k < K; ++k) s += alphas[i].values[k] * post[k];
            scores[i] = s / mass;
          }
          if (soft) {
            std::vector<T> frac = softmax_scores(scores, temperature);
            for (int i = 0; i < nA; ++i) row[i] += frac[i];
          } else {
            int best = 0;
            for (int i = 1; i < nA; ++i)
              if (scalar_value(scores[i]) > scalar_value(scores[best]))
                best = i;  // ties favor the lowest index
            row[best] += T(1.0);
          }
        }
      }
      T total(0.0);
      for (int i = 0; i < nA; ++i) total += row[i];
      for (int i = 0; i < nA; ++i) row[i] = row[i] / total;
    }
  }
  return table;
}

template <class T>
std::vector<AlphaVecT<T>> backup_soft(const std::vector<AlphaVecT<T>>& alphas,
                                      const std::vector<Belief>& B,
                                      const ParamsT<T>& p,
                                      const MetaTableT<T>& table,
                                      double temperature) {
  const int K = p.K, A = p.A;
  const int nA = static_cast<int>(alphas.size());
  // proj[a][j][i](s) = sum_{s'} alpha_i(s') tau(a,s,s') p(O_j | a, s').
  std::vector<std::vector<T>> proj(static_cast<std::size_t>(A) * nA * nA);
  for (int a = 0; a < A; ++a)
    for (int j = 0; j < nA; ++j)
      for (int i = 0; i < nA; ++i) {
        std::vector<T> v(K, T(0.0));
        for (int s = 0; s < K; ++s) {
          T acc(0.0);
          for (int sp = 0; sp < K; ++sp)
            acc += alphas[i].values[sp] * p.tau_at(a, s, sp) *
                   table.probs[(static_cast<std::size_t>(a) * K + sp) * nA + j];
          v[s] = acc;
        }
        proj[(static_cast<std::size_t>(a) * nA + j) * nA + i] = std::move(v);
      }

  std::vector<AlphaVecT<T>> out;
  out.reserve(B.size());
  std::vector<T> scores(nA), avals(A);
  for (const Belief& b : B) {
    std::vector<std::vector<T>> cand(A);
    for (int a = 0; a < A; ++a) {
      std::vector<T> alpha_ab(K);
      for (int s = 0; s < K; ++s) alpha_ab[s] = T(p.reward_at(s, a));
      for (int j = 0; j < nA; ++j) {
        for (int i = 0; i < nA; ++i) {
          const std::vector<T>& v =
              proj[(static_cast<std::size_t>(a) * nA + j) * nA + i];
          T s(0.0);
          for (int k = 0; k < K; ++k) s += v[k] * T(b.probs[k]);
          scores[i] = s;
        }
        std::vector<T> frac = softmax_scores(scores, temperature);
        for (int s = 0; s < K; ++s) {
          T mix(0.0);
          for (int i = 0; i < nA; ++i)
            mix += frac[i] *
                   proj[(static_cast<std::size_t>(a) * nA + j) * nA + i][s];
          alpha_ab[s] += T(p.gamma) * mix;
        }
      }
      T val(0.0);
      for (int s = 0; s < K; ++s) val += alpha_ab[s] * T(b.probs[s]);
      avals[a] = val;
      cand[a] = std::move(alpha_ab);
    }
    std::vector<T> q = softmax_scores(avals, temperature);
    AlphaVecT<T> na;
    na.values.assign(K, T(0.0));
    na.action_dist = q;
    for (int s = 0; s < K; ++s)
      for (int a = 0; a < A; ++a) na.values[s] += q[a] * cand[a][s];
    out.push_back(std::move(na));
  }
  return out;
}

template <class T>
std::vector<T> policy_action_dist_soft(const std::vector<AlphaVecT<T>>& alphas,
                                       const std::vector<T>& belief,
                                       double temperature) {
  const int nA = static_cast<int>(alphas.size());
  const int A = static_cast<int>(alphas[0].action_dist.size());
  std::vector<T> scores(nA);
  for (int i = 0; i < nA; ++i) {
    T s(0.0);
    for (std::size_t k = 0; k < belief.size(); ++k)
      s += alphas[i].values[k] * belief[k];
    scores[i] = s;
  }
  std::vector<T> w = softmax_scores(scores, temperature);
  std::vector<T> dist(A, T(0.0));
  for (int i = 0; i < nA; ++i)
    for (int a = 0; a < A; ++a) dist[a] += w[i] * alphas[i].action_dist[a];
  return dist;
}

}  // namespace popcorn
