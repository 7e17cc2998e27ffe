#include "popcorn/model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace popcorn {

Belief belief_update(const PomdpParams& p, const Belief& b, int action,
                     const std::vector<double>& obs, bool* underflow) {
  std::vector<double> nb = belief_update<double>(p, b.probs, action, obs,
                                                 nullptr, underflow);
  return Belief{std::move(nb)};
}

namespace {

void check_finite(double ll, const PomdpParams& p) {
  if (std::isfinite(ll)) return;
  std::ostringstream os;
  os << "non-finite log likelihood (" << ll << "); suspect ";
  double smin = *std::min_element(p.sigma.begin(), p.sigma.end());
  if (smin < 1e-8)
    os << "degenerate sigma (min " << smin << ")";
  else
    os << "degenerate tau or tau0";
  throw std::runtime_error(os.str());
}

}  // namespace

double log_marginal_likelihood_serial(const Dataset& d, const PomdpParams& p,
                                      int init_action) {
  double total = 0.0;
  for (const auto& tr : d.trajectories)
    total += filter_trajectory(p, tr, init_action).loglik;
  check_finite(total, p);
  return total;
}

double log_marginal_likelihood(const Dataset& d, const PomdpParams& p,
                               int init_action) {
  const int N = d.size();
  std::vector<double> per_traj(N);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n)
    per_traj[n] = filter_trajectory(p, d.trajectories[n], init_action).loglik;
  // Fixed-order reduction keeps results identical to the serial reference.
  double total = std::accumulate(per_traj.begin(), per_traj.end(), 0.0);
  check_finite(total, p);
  return total;
}

Posteriors forward_backward(const PomdpParams& p, const Trajectory& tr,
                            int init_action) {
  const int K = p.K;
  const int Tn = tr.length();
  // Scaled forward pass, keeping per-step emission weights and normalizers.
  std::vector<std::vector<double>> alpha(Tn, std::vector<double>(K));
  std::vector<std::vector<double>> w(Tn, std::vector<double>(K));
  Posteriors out;
  for (int t = 0; t < Tn; ++t) {
    const int ea = (t == 0) ? init_action : tr.actions[t - 1];
    double shift = -std::numeric_limits<double>::infinity();
    std::vector<double> ll(K);
    for (int k = 0; k < K; ++k) {
      ll[k] = emission_loglik(p, ea, k, tr.observations[t]);
      shift = std::max(shift, ll[k]);
    }
    double mass = 0.0;
    for (int k = 0; k < K; ++k) {
      w[t][k] = std::exp(ll[k] - shift);
      double pred = 0.0;
      if (t == 0) {
        pred = p.tau0[k];
      } else {
        for (int j = 0; j < K; ++j)
          pred += alpha[t - 1][j] * p.tau_at(tr.actions[t - 1], j, k);
      }
      alpha[t][k] = pred * w[t][k];
      mass += alpha[t][k];
    }
    if (!(mass > 0.0)) check_finite(-std::numeric_limits<double>::infinity(), p);
    for (int k = 0; k < K; ++k) alpha[t][k] /= mass;
    out.loglik += std::log(mass) + shift;
  }

  // Scaled backward pass.
  std::vector<std::vector<double>> beta(Tn, std::vector<double>(K, 1.0));
  for (int t = Tn - 2; t >= 0; --t) {
    const int a = tr.actions[t];
    double mass = 0.0;
    for (int j = 0; j < K; ++j) {
      double acc = 0.0;
      for (int k = 0; k < K; ++k)
        acc += p.tau_at(a, j, k) * w[t + 1][k] * beta[t + 1][k];
      beta[t][j] = acc;
      mass += acc;
    }
    for (int j = 0; j < K; ++j) beta[t][j] /= mass;
  }

  out.gamma.assign(Tn, std::vector<double>(K));
  for (int t = 0; t < Tn; ++t) {
    double z = 0.0;
    for (int k = 0; k < K; ++k) {
      out.gamma[t][k] = alpha[t][k] * beta[t][k];
      z += out.gamma[t][k];
    }
    for (int k = 0; k < K; ++k) out.gamma[t][k] /= z;
  }

  out.xi.assign(std::max(Tn - 1, 0), std::vector<double>(K * K));
  for (int t = 0; t + 1 < Tn; ++t) {
    const int a = tr.actions[t];
    double z = 0.0;
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k) {
        double v = alpha[t][j] * p.tau_at(a, j, k) * w[t + 1][k] *
                   beta[t + 1][k];
        out.xi[t][j * K + k] = v;
        z += v;
      }
    for (double& v : out.xi[t]) v /= z;
  }
  return out;
}

namespace {

struct SuffStats {
  std::vector<double> tau0;        // [K]
  std::vector<double> tau;         // [A][K][K]
  std::vector<double> obs_w;       // [A][K][D]
  std::vector<double> obs_m1;      // [A][K][D]
  std::vector<double> obs_m2;      // [A][K][D]
  int n_traj = 0;

  explicit SuffStats(const PomdpParams& p)
      : tau0(p.K, 0.0),
        tau(static_cast<std::size_t>(p.A) * p.K * p.K, 0.0),
        obs_w(static_cast<std::size_t>(p.A) * p.K * p.D, 0.0),
        obs_m1(obs_w.size(), 0.0),
        obs_m2(obs_w.size(), 0.0) {}

  void add(const SuffStats& o) {
    for (std::size_t i = 0; i < tau0.size(); ++i) tau0[i] += o.tau0[i];
    for (std::size_t i = 0; i < tau.size(); ++i) tau[i] += o.tau[i];
    for (std::size_t i = 0; i < obs_w.size(); ++i) {
      obs_w[i] += o.obs_w[i];
      obs_m1[i] += o.obs_m1[i];
      obs_m2[i] += o.obs_m2[i];
    }
    n_traj += o.n_traj;
  }
};

SuffStats accumulate_trajectory(const PomdpParams& p, const Trajectory& tr,
                                int init_action) {
  const int K = p.K, D = p.D;
  SuffStats s(p);
  s.n_traj = 1;
  Posteriors post = forward_backward(p, tr, init_action);
  const int Tn = tr.length();
  for (int k = 0; k < K; ++k) s.tau0[k] += post.gamma[0][k];
  for (int t = 0; t + 1 < Tn; ++t) {
    const int a = tr.actions[t];
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k)
        s.tau[(a * K + j) * K + k] += post.xi[t][j * K + k];
  }
  for (int t = 0; t < Tn; ++t) {
    const int ea = (t == 0) ? init_action : tr.actions[t - 1];
    for (int d = 0; d < D; ++d) {
      const double o = tr.observations[t][d];
      if (is_missing(o)) continue;
      for (int k = 0; k < K; ++k) {
        const double g = post.gamma[t][k];
        const std::size_t idx = (ea * K + k) * D + d;
        s.obs_w[idx] += g;
        s.obs_m1[idx] += g * o;
        s.obs_m2[idx] += g * o * o;
      }
    }
  }
  return s;
}

}  // namespace

PomdpParams em_step(const Dataset& d, const PomdpParams& p, int init_action) {
  const int K = p.K, A = p.A, D = p.D;
  const int N = d.size();
  std::vector<SuffStats> per_traj(N, SuffStats(p));
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n)
    per_traj[n] = accumulate_trajectory(p, d.trajectories[n], init_action);
  SuffStats s(p);
  for (const auto& t : per_traj) s.add(t);

  PomdpParams out = p;
  double z0 = std::accumulate(s.tau0.begin(), s.tau0.end(), 0.0);
  if (z0 > 0.0)
    for (int k = 0; k < K; ++k) out.tau0[k] = s.tau0[k] / z0;
  for (int a = 0; a < A; ++a)
    for (int j = 0; j < K; ++j) {
      double z = 0.0;
      for (int k = 0; k < K; ++k) z += s.tau[(a * K + j) * K + k];
      if (z > 0.0)  // zero expected count: keep the old row
        for (int k = 0; k < K; ++k)
          out.tau_at(a, j, k) = s.tau[(a * K + j) * K + k] / z;
    }
  for (int a = 0; a < A; ++a)
    for (int k = 0; k < K; ++k)
      for (int dd = 0; dd < D; ++dd) {
        const std::size_t idx = (a * K + k) * D + dd;
        if (s.obs_w[idx] <= 0.0) continue;
        const double mean = s.obs_m1[idx] / s.obs_w[idx];
        double var = s.obs_m2[idx] / s.obs_w[idx] - mean * mean;
        out.mu_at(a, k, dd) = mean;
        out.sigma_at(a, k, dd) =
            std::max(std::sqrt(std::max(var, 0.0)), kSigmaFloor);
      }
  out.reward = learn_rewards(d, out, init_action);
  return out;
}

std::vector<double> learn_rewards(const Dataset& d, const PomdpParams& p,
                                  int init_action,
                                  std::vector<char>* unvisited) {
  const int K = p.K, A = p.A;
  const int N = d.size();
  std::vector<std::vector<double>> num_n(N), den_n(N);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const Trajectory& tr = d.trajectories[n];
    Posteriors post = forward_backward(p, tr, init_action);
    std::vector<double> num(K * A, 0.0), den(K * A, 0.0);
    for (int t = 0; t < tr.length(); ++t) {
      const int a = tr.actions[t];
      for (int k = 0; k < K; ++k) {
        num[k * A + a] += post.gamma[t][k] * tr.rewards[t];
        den[k * A + a] += post.gamma[t][k];
      }
    }
    num_n[n] = std::move(num);
    den_n[n] = std::move(den);
  }
  std::vector<double> num(K * A, 0.0), den(K * A, 0.0);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < K * A; ++i) {
      num[i] += num_n[n][i];
      den[i] += den_n[n][i];
    }
  if (unvisited) unvisited->assign(K * A, 0);
  std::vector<double> R(K * A, 0.0);
  for (int i = 0; i < K * A; ++i) {
    if (den[i] > 0.0) {
      R[i] = num[i] / den[i];
    } else if (unvisited) {
      (*unvisited)[i] = 1;
    }
  }
  return R;
}

std::vector<std::vector<double>> forecast(const PomdpParams& p,
                                          const Trajectory& prefix,
                                          const std::vector<int>& future_actions,
                                          int horizon, int init_action) {
  if (prefix.length() < 1)
    throw std::invalid_argument("forecast: empty prefix");
  if (horizon > static_cast<int>(future_actions.size()))
    throw std::invalid_argument("forecast: horizon exceeds available actions");
  std::vector<double> b =
      filter_trajectory(p, prefix, init_action).beliefs.back();
  std::vector<std::vector<double>> preds;
  preds.reserve(horizon);
  for (int h = 0; h < horizon; ++h) {
    const int a = future_actions[h];
    b = predict_belief(p, b, a);
    std::vector<double> pred(p.D, 0.0);
    for (int d = 0; d < p.D; ++d)
      for (int k = 0; k < p.K; ++k) pred[d] += b[k] * p.mu_at(a, k, d);
    preds.push_back(std::move(pred));
  }
  return preds;
}

}  // namespace popcorn
