#include "popcorn/objective.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace popcorn {

Mode mode_from_string(const std::string& s) {
  if (s == "popcorn") return Mode::kPopcorn;
  if (s == "two_stage") return Mode::kTwoStage;
  if (s == "value_only") return Mode::kValueOnly;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string mode_to_string(Mode m) {
  switch (m) {
    case Mode::kPopcorn: return "popcorn";
    case Mode::kTwoStage: return "two_stage";
    case Mode::kValueOnly: return "value_only";
  }
  return "?";
}

SolverState make_solver_state(const PomdpParams& p, const ObjectiveConfig& cfg,
                              std::mt19937_64& rng) {
  SolverState s;
  s.vf = reset_value_function(p, cfg.temperature);
  s.meta_z = draw_meta_normals(p.A, p.K, cfg.k_obs, p.D, rng);
  return s;
}

template <class T>
ObjectiveValueT<T> evaluate_objective_t(
    const UnconstrainedParams& shape, const std::vector<T>& flat,
    const Dataset& data, const ObjectiveConfig& cfg, const SolverState& state,
    std::vector<AlphaVecT<T>>* out_alphas) {
  constexpr bool kOnTape = std::is_same_v<T, ad::Var>;
  const bool need_lik = !(kOnTape && cfg.mode == Mode::kValueOnly);
  const bool need_val = !(kOnTape && cfg.mode == Mode::kTwoStage);
  ParamsT<T> p = constrain(shape, flat);
  const int N = data.size();

  ObjectiveValueT<T> out;
  std::vector<FilterResult<T>> filtered(N);
  for (int n = 0; n < N; ++n)
    filtered[n] =
        filter_trajectory(p, data.trajectories[n], cfg.init_action);
  if (need_lik) {
    T ll(0.0);
    for (int n = 0; n < N; ++n) ll += filtered[n].loglik;
    out.loglik_rescaled = ll / T(double(data.observed_scalar_count()));
  }

  if (need_val) {
    std::vector<AlphaVecT<T>> alphas = lift_alpha_vecs<T>(state.vf.alphas);
    for (int b = 0; b < cfg.backups_per_step; ++b) {
      MetaTableT<T> table =
          build_meta_table(alphas, state.vf.beliefs, p, state.meta_z,
                           cfg.k_obs, /*soft=*/true, cfg.temperature);
      alphas = backup_soft(alphas, state.vf.beliefs, p, table,
                           cfg.temperature);
    }
    std::vector<std::vector<T>> pol(N);
    for (int n = 0; n < N; ++n) {
      const Trajectory& tr = data.trajectories[n];
      pol[n].reserve(tr.length());
      for (int t = 0; t < tr.length(); ++t) {
        std::vector<T> dist = policy_action_dist_soft(
            alphas, filtered[n].beliefs[t], cfg.temperature);
        std::vector<T> restricted =
            restrict_policy_support(dist, tr.behavior_probs[t], cfg.delta);
        pol[n].push_back(restricted[tr.actions[t]]);
      }
    }
    OpeResultT<T> ope = cwpdis(data, pol, data.gamma);
    out.policy_value = ope.value;
    out.ess_total = ope.ess_total;
    if (out_alphas) *out_alphas = std::move(alphas);
  }

  switch (cfg.mode) {
    case Mode::kPopcorn: {
      out.total = out.loglik_rescaled;
      if (cfg.lambda > 0.0) {
        T pen = ess_penalty(out.ess_total, cfg.lambda_ess);
        out.total += T(cfg.lambda) * (out.policy_value - pen);
      }
      break;
    }
    case Mode::kTwoStage:
      out.total = out.loglik_rescaled;
      break;
    case Mode::kValueOnly: {
      T pen = ess_penalty(out.ess_total, cfg.lambda_ess);
      out.total = out.policy_value - pen;
      break;
    }
  }
  return out;
}

template ObjectiveValueT<double> evaluate_objective_t<double>(
    const UnconstrainedParams&, const std::vector<double>&, const Dataset&,
    const ObjectiveConfig&, const SolverState&, std::vector<AlphaVecT<double>>*);
template ObjectiveValueT<ad::Var> evaluate_objective_t<ad::Var>(
    const UnconstrainedParams&, const std::vector<ad::Var>&, const Dataset&,
    const ObjectiveConfig&, const SolverState&,
    std::vector<AlphaVecT<ad::Var>>*);

namespace {

ObjectiveValue collapse(const ObjectiveValueT<double>& v) {
  return {v.total, v.loglik_rescaled, v.policy_value, v.ess_total};
}

void throw_nonfinite_component(const ObjectiveValueT<double>& v) {
  std::ostringstream os;
  os << "non-finite objective: ";
  if (!std::isfinite(v.loglik_rescaled)) os << "loglik_rescaled";
  else if (!std::isfinite(v.policy_value)) os << "policy_value";
  else if (!std::isfinite(v.ess_total)) os << "ess_total";
  else os << "total";
  throw std::runtime_error(os.str());
}

}  // namespace

ObjectiveValue evaluate_objective(const UnconstrainedParams& params,
                                  const Dataset& data,
                                  const ObjectiveConfig& cfg,
                                  const SolverState& state) {
  auto v = evaluate_objective_t<double>(params, params.flatten(), data, cfg,
                                        state, nullptr);
  if (!std::isfinite(v.total)) throw_nonfinite_component(v);
  return collapse(v);
}

std::vector<double> objective_gradient(const UnconstrainedParams& params,
                                       const Dataset& data,
                                       const ObjectiveConfig& cfg,
                                       const SolverState& state,
                                       ObjectiveValue* value) {
  // Reuse tape storage across calls within a thread; node counts are stable
  // between iterations, so cleared capacity avoids repeated large allocations.
  static thread_local ad::Tape tape;
  tape.clear();
  const std::vector<double> flat_d = params.flatten();
  std::vector<ad::Var> flat;
  flat.reserve(flat_d.size());
  for (double x : flat_d) flat.push_back(ad::Var::input(tape, x));
  auto v = evaluate_objective_t<ad::Var>(params, flat, data, cfg, state,
                                         nullptr);
  ObjectiveValueT<double> vd{v.total.val(), v.loglik_rescaled.val(),
                             v.policy_value.val(), v.ess_total.val()};
  if (value) *value = collapse(vd);
  if (!std::isfinite(vd.total)) throw_nonfinite_component(vd);
  std::vector<double> adj = tape.backward(v.total.idx);
  std::vector<double> grad(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    grad[i] = adj[flat[i].idx];
    if (!std::isfinite(grad[i]))
      throw std::runtime_error("non-finite gradient at " +
                               params.coord_name(i));
  }
  return grad;
}

void rprop_step(std::vector<double>& params, const std::vector<double>& grad,
                RpropState& state) {
  constexpr double kEtaPlus = 1.2, kEtaMinus = 0.5;
  constexpr double kStepMin = 1e-6, kStepMax = 1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grad[i];
    const double prod = state.prev_grad[i] * g;
    if (prod > 0.0) {
      state.step[i] = std::min(state.step[i] * kEtaPlus, kStepMax);
    } else if (prod < 0.0) {
      state.step[i] = std::max(state.step[i] * kEtaMinus, kStepMin);
      g = 0.0;  // skip the update after a sign flip
    }
    if (g > 0.0)
      params[i] += state.step[i];
    else if (g < 0.0)
      params[i] -= state.step[i];
    state.prev_grad[i] = g;
  }
}

namespace {

// k-means++ centers over mean-imputed observation vectors.
std::vector<std::vector<double>> kmeanspp_centers(
    const std::vector<std::vector<double>>& points, int K,
    std::mt19937_64& rng) {
  std::vector<std::vector<double>> centers;
  std::uniform_int_distribution<std::size_t> unif(0, points.size() - 1);
  centers.push_back(points[unif(rng)]);
  std::vector<double> d2(points.size());
  while (static_cast<int>(centers.size()) < K) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) {
        double d = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) {
          const double diff = points[i][j] - c[j];
          d += diff * diff;
        }
        best = std::min(best, d);
      }
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(points[unif(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng), acc = 0.0;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (target <= acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

}  // namespace

UnconstrainedParams init_params(const Dataset& data, int K, double gamma,
                                int init_action, std::mt19937_64& rng) {
  const int A = data.A, D = data.D;
  // Per-dimension empirical moments over observed scalars.
  std::vector<double> mean(D, 0.0), m2(D, 0.0);
  std::vector<long> cnt(D, 0);
  for (const auto& tr : data.trajectories)
    for (const auto& o : tr.observations)
      for (int d = 0; d < D; ++d)
        if (!is_missing(o[d])) {
          mean[d] += o[d];
          m2[d] += o[d] * o[d];
          ++cnt[d];
        }
  std::vector<double> sd(D, 1.0);
  for (int d = 0; d < D; ++d) {
    if (cnt[d] > 0) {
      mean[d] /= cnt[d];
      double var = m2[d] / cnt[d] - mean[d] * mean[d];
      sd[d] = std::sqrt(std::max(var, 1e-4));
    } else {
      mean[d] = 0.0;
    }
  }
  std::vector<std::vector<double>> points;
  for (const auto& tr : data.trajectories)
    for (const auto& o : tr.observations) {
      std::vector<double> x(D);
      for (int d = 0; d < D; ++d) x[d] = is_missing(o[d]) ? mean[d] : o[d];
      points.push_back(std::move(x));
    }
  std::vector<std::vector<double>> centers = kmeanspp_centers(points, K, rng);

  UnconstrainedParams u;
  u.K = K;
  u.A = A;
  u.D = D;
  u.gamma = gamma;
  std::normal_distribution<double> noise(0.0, 0.1);
  u.tau0_logits.resize(K);
  for (auto& x : u.tau0_logits) x = noise(rng);
  u.tau_logits.resize(static_cast<std::size_t>(A) * K * K);
  for (auto& x : u.tau_logits) x = noise(rng);
  u.mu_raw.resize(static_cast<std::size_t>(A) * K * D);
  u.sigma_raw.resize(u.mu_raw.size());
  // Jitter proportional to the data spread keeps restarts diverse; pure
  // k-means++ centers would start every restart in the same basin.
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (int a = 0; a < A; ++a)
    for (int k = 0; k < K; ++k)
      for (int d = 0; d < D; ++d) {
        u.mu_raw[(a * K + k) * D + d] =
            centers[k][d] + 0.5 * sd[d] * jitter(rng);
        u.sigma_raw[(a * K + k) * D + d] = softplus_inv(
            std::max(sd[d] * std::exp(0.5 * jitter(rng)) - kSigmaFloor,
                     kSigmaFloor));
      }
  u.reward.assign(static_cast<std::size_t>(K) * A, 0.0);
  (void)init_action;
  return u;
}

namespace {

void merge_duplicate_alphas(std::vector<AlphaVector>& alphas) {
  std::vector<AlphaVector> out;
  for (auto& a : alphas) {
    bool dup = false;
    for (const auto& e : out) {
      double dmax = 0.0;
      for (std::size_t s = 0; s < a.values.size(); ++s)
        dmax = std::max(dmax, std::abs(e.values[s] - a.values[s]));
      if (dmax < 1e-9) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(std::move(a));
  }
  alphas = std::move(out);
}

// Runs the same soft backups as the objective in plain doubles and installs
// the result as the cached value function.
void advance_solver(SolverState& state, const PomdpParams& p,
                    const ObjectiveConfig& cfg) {
  std::vector<AlphaVecT<double>> alphas = to_alpha_vecs(state.vf);
  for (int b = 0; b < cfg.backups_per_step; ++b) {
    MetaTableT<double> table =
        build_meta_table(alphas, state.vf.beliefs, p, state.meta_z, cfg.k_obs,
                         /*soft=*/true, cfg.temperature);
    alphas = backup_soft(alphas, state.vf.beliefs, p, table, cfg.temperature);
  }
  std::vector<AlphaVector> plain(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    plain[i].values = alphas[i].values;
    plain[i].action_dist = alphas[i].action_dist;
  }
  merge_duplicate_alphas(plain);
  state.vf.alphas = std::move(plain);
}

struct RestartOutcome {
  UnconstrainedParams u;
  SolverState state;
  ObjectiveValue final_value;
  std::vector<TraceRow> trace;
  bool failed = false;
};

RestartOutcome run_restart(const Dataset& data, int K,
                           const ObjectiveConfig& cfg, int restart) {
  RestartOutcome out;
  std::mt19937_64 rng(cfg.seed * 1000003u + restart);
  out.u = init_params(data, K, data.gamma, cfg.init_action, rng);
  if (cfg.warm_start_em) {
    PomdpParams p = constrain(out.u);
    for (int i = 0; i < cfg.warm_start_iters; ++i)
      p = em_step(data, p, cfg.init_action);
    double gamma = out.u.gamma;
    out.u = unconstrain(p);
    out.u.gamma = gamma;
  }
  {
    PomdpParams p0 = constrain(out.u);
    p0.reward = learn_rewards(data, p0, cfg.init_action);
    out.u.reward = p0.reward;
  }
  out.state = make_solver_state(constrain(out.u), cfg, rng);

  std::vector<double> flat = out.u.flatten();
  RpropState ropt(flat.size());
  double best_total = -std::numeric_limits<double>::infinity();
  int best_iter = -1;
  UnconstrainedParams best_u = out.u;
  SolverState best_state = out.state;
  const auto t0 = std::chrono::steady_clock::now();
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (cfg.reset_period > 0 && iter > 0 && iter % cfg.reset_period == 0)
      out.state = make_solver_state(constrain(out.u), cfg, rng);
    else if (cfg.expand_period > 0 && iter > 0 && iter % cfg.expand_period == 0)
      out.state.vf.beliefs =
          expand_belief_set(out.state.vf.beliefs, constrain(out.u),
                            cfg.eps_expand, cfg.max_beliefs, rng);

    ObjectiveValue val;
    std::vector<double> grad =
        objective_gradient(out.u, data, cfg, out.state, &val);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.trace.push_back({iter, val.loglik_rescaled, val.policy_value,
                         val.ess_total, val.total, secs});
    if (val.total > best_total + cfg.stall_tol) {
      best_total = val.total;
      best_iter = iter;
      best_u = out.u;
      best_state = out.state;
    } else if (best_iter >= 0 && iter - best_iter >= cfg.stall_window) {
      break;
    }

    rprop_step(flat, grad, ropt);
    out.u.unflatten(flat);
    PomdpParams p = constrain(out.u);
    p.reward = learn_rewards(data, p, cfg.init_action);
    out.u.reward = p.reward;
    advance_solver(out.state, p, cfg);
  }
  // Return the best iterate seen, not the last one.
  if (best_iter >= 0) {
    out.u = std::move(best_u);
    out.state = std::move(best_state);
  }
  out.final_value = evaluate_objective(out.u, data, cfg, out.state);
  return out;
}

}  // namespace

TrainResult train(const Dataset& data, int K, const ObjectiveConfig& cfg,
                  const TraceCallback& on_trace) {
  if (cfg.restarts < 1) throw std::invalid_argument("train: restarts >= 1");
  std::vector<RestartOutcome> outcomes(cfg.restarts);
  int n_failed = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : n_failed)
  for (int r = 0; r < cfg.restarts; ++r) {
    try {
      outcomes[r] = run_restart(data, K, cfg, r);
    } catch (const std::exception&) {
      outcomes[r].failed = true;
      ++n_failed;
    }
  }
  if (n_failed == cfg.restarts)
    throw std::runtime_error("train: every restart failed (non-finite)");

  TrainResult res;
  res.restart_totals.assign(cfg.restarts,
                            -std::numeric_limits<double>::infinity());
  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    if (outcomes[r].failed) continue;
    res.restart_totals[r] = outcomes[r].final_value.total;
    if (best < 0 || res.restart_totals[r] > res.restart_totals[best]) best = r;
  }
  if (on_trace)
    for (int r = 0; r < cfg.restarts; ++r)
      for (const auto& row : outcomes[r].trace) on_trace(r, row);
  RestartOutcome& win = outcomes[best];
  res.best_restart = best;
  res.unconstrained = win.u;
  res.params = constrain(win.u);
  res.vf = win.state.vf;
  res.final_value = win.final_value;
  res.trace = std::move(win.trace);
  return res;
}

TrainResult two_stage_train(const Dataset& data, int K,
                            const ObjectiveConfig& cfg) {
  const long n_obs = data.observed_scalar_count();
  PomdpParams best;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<TraceRow> best_trace;
  for (int r = 0; r < cfg.restarts; ++r) {
    std::mt19937_64 rng(cfg.seed * 1000003u + r);
    UnconstrainedParams u = init_params(data, K, data.gamma, cfg.init_action, rng);
    PomdpParams p = constrain(u);
    double prev = -std::numeric_limits<double>::infinity();
    std::vector<TraceRow> trace;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < cfg.em_max_iters; ++i) {
      p = em_step(data, p, cfg.init_action);
      const double ll = log_marginal_likelihood(data, p, cfg.init_action);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      trace.push_back({i, ll / n_obs, 0.0, 0.0, ll / n_obs, secs});
      if (std::isfinite(prev) && ll - prev < cfg.em_tol) break;
      prev = ll;
    }
    const double ll = log_marginal_likelihood(data, p, cfg.init_action);
    if (ll > best_ll) {
      best_ll = ll;
      best = p;
      best_trace = std::move(trace);
    }
  }
  std::mt19937_64 rng(cfg.seed * 999983u + 7u);
  ValueFunction vf =
      solve_hard(best, cfg.temperature, cfg.k_obs, cfg.pbvi_max_sweeps,
                 cfg.pbvi_tol, cfg.eps_expand, cfg.max_beliefs,
                 /*expand_every=*/10, rng);

  TrainResult res;
  res.params = best;
  res.unconstrained = unconstrain(best);
  res.vf = vf;
  res.trace = std::move(best_trace);
  res.best_restart = 0;
  res.final_value.loglik_rescaled = best_ll / n_obs;
  res.final_value.total = res.final_value.loglik_rescaled;
  return res;
}

}  // namespace popcorn
