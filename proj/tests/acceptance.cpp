// Acceptance gate: one pass/fail line per criterion, nonzero exit when any
// fail. Heavier training-based criteria share trained models. Set
// POPCORN_FULL_ACCEPTANCE=1 for the full 25-restart variant of criterion 7.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "popcorn/cli.hpp"
#include "popcorn/envs.hpp"
#include "popcorn/model.hpp"
#include "popcorn/objective.hpp"
#include "popcorn/ope.hpp"
#include "popcorn/solver.hpp"

using namespace popcorn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("CRITERION %2d: %s — %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

// Per-scalar log-likelihood of a model on a dataset.
double ll_per_scalar(const PomdpParams& p, const Dataset& d) {
  return log_marginal_likelihood(d, p) / double(d.observed_scalar_count());
}

double rollout_value(const PomdpParams& p, const ValueFunction& vf,
                     const TigerSpec& spec, int n, unsigned seed,
                     bool soft = false) {
  ModelPolicy pol(p, vf, soft);
  return rollout_evaluate(pol, spec, n, seed).mean;
}

// ---- criterion 1: likelihood vs path enumeration ----
void criterion_1() {
  const double t0 = now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> kd(1, 3), dd(1, 2), td(1, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int K = kd(rng), D = dd(rng), T = td(rng);
    PomdpParams p = test::random_params(K, 2, D, rng);
    Dataset data = test::sample_dataset(p, 1, T, rng, 0.3);
    const double fast = log_marginal_likelihood(data, p);
    const double slow = test::brute_force_loglik(p, data);
    worst = std::max(worst, std::abs(fast - slow) /
                                std::max(1.0, std::abs(slow)));
  }
  const double dt = now() - t0;
  report(1, worst < 1e-8 && dt < 10.0,
         fmt("likelihood vs path enumeration, 100 instances: worst rel err "
             "%.2e (tol 1e-8), %.1fs (budget 10s)", worst, dt));
}

// ---- criterion 2: EM monotonicity at N=1000 ----
void criterion_2() {
  const double t0 = now();
  Dataset d = generate_tiger_dataset(tiger_spec(TigerVariant::kIrrelevantNoise),
                                     1000, 2);
  std::mt19937_64 rng(2);
  PomdpParams p = constrain(init_params(d, 2, d.gamma, 0, rng));
  double prev = log_marginal_likelihood(d, p);
  double worst_drop = 0.0;
  for (int it = 0; it < 50; ++it) {
    p = em_step(d, p);
    const double cur = log_marginal_likelihood(d, p);
    worst_drop = std::max(worst_drop, prev - cur);
    prev = cur;
  }
  const double dt = now() - t0;
  report(2, worst_drop <= 1e-8 && dt < 60.0,
         fmt("50 EM iterations on N=1000: worst decrease %.2e (slack 1e-8), "
             "%.1fs (budget 60s)", worst_drop, dt));
}

// ---- criterion 3: PBVI vs belief-grid oracle ----
void criterion_3() {
  const double t0 = now();
  PomdpParams p;
  p.K = 2;
  p.A = 3;
  p.D = 1;
  p.gamma = 0.9;
  p.tau0 = {0.5, 0.5};
  p.tau.assign(12, 0.0);
  for (int k = 0; k < 2; ++k) p.tau[(0 * 2 + k) * 2 + k] = 1.0;
  for (int a = 1; a < 3; ++a)
    for (int k = 0; k < 2; ++k)
      for (int kk = 0; kk < 2; ++kk) p.tau[(a * 2 + k) * 2 + kk] = 0.5;
  p.mu = {0.0, 1.0, 0.0, 1.0, 0.0, 1.0};
  p.sigma.assign(6, 0.05);
  p.reward = {-0.1, 1.0, -5.0, -0.1, -5.0, 1.0};

  DiscretePomdp dp;
  dp.K = 2;
  dp.A = 3;
  dp.Z = 2;
  dp.gamma = p.gamma;
  dp.tau = p.tau;
  dp.reward = p.reward;
  dp.obsprob.assign(12, 0.0);
  for (int a = 0; a < 3; ++a)
    for (int k = 0; k < 2; ++k) dp.obsprob[(a * 2 + k) * 2 + k] = 1.0;

  GridValueFunction grid = exact_belief_grid_solve(dp, 200);
  std::mt19937_64 rng(3);
  ValueFunction vf = solve_hard(p, 0.01, 200, 80, 1e-6, 0.05, 20, 10, rng);
  double worst = 0.0;
  for (const Belief& b : vf.beliefs)
    worst = std::max(worst, std::abs(vf.value_at(b) - grid.value_at(b.probs)));
  const double dt = now() - t0;
  report(3, worst < 0.05 && dt < 60.0,
         fmt("hard PBVI vs grid value iteration at %zu beliefs: worst gap "
             "%.4f (tol 0.05), %.1fs (budget 60s)", vf.beliefs.size(), worst,
             dt));
}

// ---- criterion 4: softmax backups approach hard backups ----
void criterion_4() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> kd(2, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int K = kd(rng);
    PomdpParams p = test::random_params(K, 2, 1, rng);
    std::vector<Belief> B = init_belief_set(K);
    std::vector<double> z = draw_meta_normals(p.A, K, 60, p.D, rng);
    const double tau_soft = 1e-6;
    ValueFunction vf0 = reset_value_function(p, tau_soft);
    std::vector<AlphaVector> hard = vf0.alphas;
    std::vector<AlphaVecT<double>> soft = to_alpha_vecs(vf0);
    for (int sweep = 0; sweep < 5; ++sweep) {
      MetaTableT<double> th = build_meta_table(
          lift_alpha_vecs<double>(hard), B, p, z, 60, false, tau_soft);
      hard = backup_hard(hard, B, p, th);
      MetaTableT<double> ts = build_meta_table(soft, B, p, z, 60, true,
                                               tau_soft);
      soft = backup_soft(soft, B, p, ts, tau_soft);
    }
    for (const Belief& b : B) {
      double vh = -1e300, vs = -1e300;
      for (const auto& al : hard) {
        double v = 0.0;
        for (int k = 0; k < K; ++k) v += al.values[k] * b.probs[k];
        vh = std::max(vh, v);
      }
      for (const auto& al : soft) {
        double v = 0.0;
        for (int k = 0; k < K; ++k) v += al.values[k] * b.probs[k];
        vs = std::max(vs, v);
      }
      worst = std::max(worst, std::abs(vh - vs));
    }
  }
  report(4, worst < 1e-3,
         fmt("soft backups at temperature 1e-6 vs hard, 20 random models: "
             "worst per-belief gap %.2e (tol 1e-3)", worst));
}

// ---- criterion 5: gradient vs finite differences ----
void criterion_5() {
  const double t0 = now();
  Dataset data = generate_tiger_dataset(
      tiger_spec(TigerVariant::kIrrelevantNoise), 40, 13);
  double worst = 0.0;
  for (Mode mode : {Mode::kPopcorn, Mode::kTwoStage, Mode::kValueOnly}) {
    ObjectiveConfig cfg;
    cfg.mode = mode;
    cfg.lambda = 1.0;
    cfg.lambda_ess = 2.0;
    cfg.delta = 0.01;
    cfg.k_obs = 30;
    std::mt19937_64 rng(99);
    UnconstrainedParams u = init_params(data, 2, data.gamma, 0, rng);
    SolverState state = make_solver_state(constrain(u), cfg, rng);
    std::vector<double> grad = objective_gradient(u, data, cfg, state);
    std::vector<double> flat = u.flatten();
    std::mt19937_64 pick(5);
    std::uniform_int_distribution<std::size_t> id(0, flat.size() - 1);
    const double h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t i = id(pick);
      UnconstrainedParams up = u, um = u;
      std::vector<double> fp = flat, fm = flat;
      fp[i] += h;
      fm[i] -= h;
      up.unflatten(fp);
      um.unflatten(fm);
      const double vp = evaluate_objective(up, data, cfg, state).total;
      const double vm = evaluate_objective(um, data, cfg, state).total;
      const double fd = (vp - vm) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
      worst = std::max(worst, std::abs(grad[i] - fd) / scale);
    }
  }
  const double dt = now() - t0;
  report(5, worst < 1e-4 && dt < 120.0,
         fmt("gradient vs central differences, 50 coords x 3 modes: worst rel "
             "err %.2e (tol 1e-4), %.1fs (budget 120s)", worst, dt));
}

// ---- criterion 6: on-policy CWPDIS reduction ----
void criterion_6() {
  Dataset d = generate_tiger_dataset(tiger_spec(TigerVariant::kIrrelevantNoise),
                                     200, 77);
  std::vector<std::vector<double>> probs;
  for (const auto& tr : d.trajectories) {
    std::vector<double> row;
    for (int t = 0; t < tr.length(); ++t)
      row.push_back(tr.behavior_probs[t][tr.actions[t]]);
    probs.push_back(std::move(row));
  }
  OpeReport r = cwpdis(d, probs, d.gamma);
  double expected = 0.0, disc = 1.0;
  for (int t = 0; t < d.max_length(); ++t) {
    double sum = 0.0;
    for (const auto& tr : d.trajectories)
      if (t < tr.length()) sum += tr.rewards[t];
    expected += disc * sum / d.size();
    disc *= d.gamma;
  }
  const double err = std::abs(r.value - expected);
  report(6, err < 1e-12,
         fmt("on-policy CWPDIS vs discounted empirical mean: |diff| %.2e "
             "(tol 1e-12)", err));
}

// ---- criteria 7-9 share trained models ----

struct TrainedPair {
  TrainResult popcorn;
  TrainResult two_stage;
  TrainResult value_only;
};

ObjectiveConfig base_config(double lambda, unsigned seed, int restarts,
                            int iters) {
  ObjectiveConfig cfg;
  cfg.lambda = lambda;
  cfg.delta = 0.01;
  cfg.seed = seed;
  cfg.restarts = restarts;
  cfg.max_iters = iters;
  return cfg;
}

// ---- criterion 7: wrong-likelihood quantitative reproduction ----
void criterion_7() {
  const bool full = []() {
    const char* e = std::getenv("POPCORN_FULL_ACCEPTANCE");
    return e && std::string(e) == "1";
  }();
  const double t0 = now();
  TigerSpec spec = tiger_spec(TigerVariant::kWrongLikelihood);
  Dataset train_d = generate_tiger_dataset(spec, 1000, 5);
  Dataset test_d = generate_tiger_dataset(spec, 1000, 1000);

  // Manual oracle-state solution.
  PomdpParams manual = manual_tiger_solution(spec);
  std::mt19937_64 rng(7);
  ValueFunction mvf = solve_hard(manual, 0.01, 100, 60, 1e-5, 0.1, 20, 10, rng);
  const double m_ll = ll_per_scalar(manual, test_d);
  const double m_roll = rollout_value(manual, mvf, spec, 1000, 7);
  const bool m_ok = std::abs(m_ll + 0.95) <= 0.05 &&
                    std::abs(m_roll - 0.20) <= 0.10;

  // 2-stage: maximum-likelihood fit then planning.
  ObjectiveConfig ts_cfg = base_config(0.0, 5, 5, 0);
  ts_cfg.mode = Mode::kTwoStage;
  TrainResult ts = two_stage_train(train_d, 2, ts_cfg);
  const double ts_ll = ll_per_scalar(ts.params, test_d);
  const double ts_roll = rollout_value(ts.params, ts.vf, spec, 1000, 7);
  const bool ts_ok = ts_ll >= -0.80 && ts_roll < 0.0;

  // Joint objective.
  ObjectiveConfig pc_cfg = base_config(1.0, 5, full ? 25 : 5, 200);
  pc_cfg.mode = Mode::kPopcorn;
  TrainResult pc = train(train_d, 2, pc_cfg);
  const double pc_ll = ll_per_scalar(pc.params, test_d);
  const double pc_roll =
      rollout_value(pc.params, pc.vf, spec, 1000, 7, /*soft=*/true);
  const double value_floor = full ? 0.3 : 0.1;
  const bool pc_ok =
      pc_roll >= value_floor && pc_ll >= -1.05 && pc_ll <= -0.85;

  const double dt = now() - t0;
  report(7, m_ok && ts_ok && pc_ok,
         fmt("wrong-likelihood tiger (%s): manual ll %.4f rollout %.3f "
             "[need -0.95±0.05, 0.20±0.10]; 2-stage ll %.4f rollout %.3f "
             "[need ≥-0.80, <0]; joint ll %.4f rollout %.3f [need in "
             "[-1.05,-0.85], ≥%.1f]; %.0fs",
             full ? "full, 25 restarts" : "smoke, 5 restarts", m_ll, m_roll,
             ts_ll, ts_roll, pc_ll, pc_roll, value_floor, dt));
}

// ---- criterion 8: ordering on irrelevant-noise and missing-data ----
TrainedPair train_trio(TigerVariant v, double lambda, unsigned seed,
                       int restarts, int iters) {
  Dataset d = generate_tiger_dataset(tiger_spec(v), 1000, 42);
  TrainedPair out;
  ObjectiveConfig pc = base_config(lambda, seed, restarts, iters);
  pc.mode = Mode::kPopcorn;
  out.popcorn = train(d, 2, pc);
  ObjectiveConfig ts = base_config(0.0, seed, restarts, 0);
  ts.mode = Mode::kTwoStage;
  out.two_stage = two_stage_train(d, 2, ts);
  ObjectiveConfig vo = base_config(lambda, seed, restarts, iters);
  vo.mode = Mode::kValueOnly;
  out.value_only = train(d, 2, vo);
  return out;
}

void criterion_8(const TrainedPair& irr, const TrainedPair& mis) {
  struct Case {
    const char* name;
    TigerVariant v;
    const TrainedPair* models;
  } cases[] = {{"irrelevant_noise", TigerVariant::kIrrelevantNoise, &irr},
               {"missing_data", TigerVariant::kMissingData, &mis}};
  bool all_ok = true;
  std::string detail;
  for (const Case& c : cases) {
    TigerSpec spec = tiger_spec(c.v);
    Dataset test_d = generate_tiger_dataset(spec, 1000, 43);
    // Gradient-trained modes are rolled out with the soft policy they were
    // optimized for; the 2-stage planner is a hard argmax policy.
    const double pc_roll =
        rollout_value(c.models->popcorn.params, c.models->popcorn.vf, spec,
                      1000, 3, /*soft=*/true);
    const double ts_roll =
        rollout_value(c.models->two_stage.params, c.models->two_stage.vf, spec,
                      1000, 3);
    const double ts_ll = ll_per_scalar(c.models->two_stage.params, test_d);
    const double vo_ll = ll_per_scalar(c.models->value_only.params, test_d);
    const bool ok = pc_roll > ts_roll && ts_ll > vo_ll;
    all_ok = all_ok && ok;
    detail += fmt("%s[joint rollout %.3f > 2-stage %.3f; 2-stage test ll "
                  "%.4f > value-only %.4f] ",
                  c.name, pc_roll, ts_roll, ts_ll, vo_ll);
  }
  report(8, all_ok, "mode orderings: " + detail);
}

// ---- criterion 9: forecast MAE ordering + reward respecification ----
double forecast_mae(const PomdpParams& p, const Dataset& test_d) {
  double err = 0.0;
  int count = 0;
  for (const auto& tr : test_d.trajectories) {
    const int prefix_len = 5, horizon = 3;
    if (tr.length() < prefix_len + horizon) continue;
    Trajectory prefix = tr;
    prefix.actions.resize(prefix_len);
    prefix.observations.resize(prefix_len);
    prefix.rewards.resize(prefix_len);
    std::vector<int> future(tr.actions.begin() + prefix_len,
                            tr.actions.begin() + prefix_len + horizon);
    auto pred = forecast(p, prefix, future, horizon);
    for (int h = 0; h < horizon; ++h)
      for (int d = 0; d < p.D; ++d) {
        const double truth = tr.observations[prefix_len + h][d];
        if (is_missing(truth)) continue;
        err += std::abs(pred[h][d] - truth);
        ++count;
      }
  }
  return err / count;
}

void criterion_9(const TrainedPair& irr) {
  const double t0 = now();
  // Part A: multi-step observation forecasting, likelihood-trained vs
  // value-only models, MAE over all observed dimensions.
  TigerSpec spec = tiger_spec(TigerVariant::kIrrelevantNoise);
  Dataset test_d = generate_tiger_dataset(spec, 500, 902);
  const double mae_ts = forecast_mae(irr.two_stage.params, test_d);
  const double mae_vo = forecast_mae(irr.value_only.params, test_d);
  const bool forecast_ok = mae_ts <= mae_vo;

  // Part B: reward respecification transfer at K=4. Train under the original
  // listen cost, then move to an environment with a five-fold listen cost:
  // re-estimate only the reward table on data from the new environment
  // (dynamics frozen), replan, and roll out. A model whose dynamics are
  // faithful should still produce a sensible policy; judged on the common
  // scale of achieved value in the new environment (a raw before/after drop
  // would reward models that were already worthless before the transfer).
  TigerSpec respec = spec;
  respec.reward_listen = -0.5;
  Dataset d_old = generate_tiger_dataset(spec, 1000, 5);
  Dataset d_new = generate_tiger_dataset(respec, 1000, 5);

  auto transfer_value = [&](const PomdpParams& trained) {
    PomdpParams p = trained;
    p.reward = learn_rewards(d_new, p);
    std::mt19937_64 rng(9);
    ValueFunction vf = solve_hard(p, 0.01, 100, 60, 1e-5, 0.1, 20, 10, rng);
    return rollout_value(p, vf, respec, 1000, 91);
  };

  ObjectiveConfig ts_cfg = base_config(0.0, 5, 3, 0);
  ts_cfg.mode = Mode::kTwoStage;
  TrainResult ts4 = two_stage_train(d_old, 4, ts_cfg);
  ObjectiveConfig vo_cfg = base_config(1.0, 5, 2, 80);
  vo_cfg.mode = Mode::kValueOnly;
  TrainResult vo4 = train(d_old, 4, vo_cfg);

  const double v_ts = transfer_value(ts4.params);
  const double v_vo = transfer_value(vo4.params);
  const bool respec_ok = v_ts >= v_vo;
  const double dt = now() - t0;
  report(9, forecast_ok && respec_ok,
         fmt("forecast MAE over observation dims: 2-stage %.4f ≤ value-only "
             "%.4f; respecified-reward transfer value at K=4: 2-stage %.3f ≥ "
             "value-only %.3f; %.0fs",
             mae_ts, mae_vo, v_ts, v_vo, dt));
}

// ---- criterion 10: byte-identical metric rows under a fixed seed ----
std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

void criterion_10() {
  const std::string dir = "/tmp/popcorn_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg_path = dir + "/run.cfg";
  {
    std::ofstream f(cfg_path);
    f << "env = tiger_irrelevant_noise\nn_traj = 60\nK = 2\n"
      << "modes = popcorn,two_stage\nlambdas = 1\nlambda_esses = 0\n"
      << "delta = 0.01\nseed = 12\nrestarts = 1\nmax_iters = 10\n"
      << "em_max_iters = 10\nk_obs = 30\nout_dir = " << dir << "/a\n";
  }
  auto run_train = [&](const std::string& out) {
    const char* argv[] = {"popcorn", "train", "--config", cfg_path.c_str(),
                          "--out", out.c_str()};
    return cli::run(6, argv);
  };
  const int rc1 = run_train(dir + "/a");
  const int rc2 = run_train(dir + "/b");
  const std::string a = slurp(dir + "/a/results.csv");
  const std::string b = slurp(dir + "/b/results.csv");
  const bool ok = rc1 == cli::kOk && rc2 == cli::kOk && !a.empty() && a == b;
  report(10, ok,
         fmt("repeated train command: results.csv %s (%zu bytes)",
             ok ? "byte-identical" : "differs", a.size()));
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const double t0 = now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  TrainedPair irr = train_trio(TigerVariant::kIrrelevantNoise, 1.0, 5, 6, 200);
  TrainedPair mis = train_trio(TigerVariant::kMissingData, 3.0, 5, 8, 300);
  criterion_8(irr, mis);
  criterion_9(irr);
  criterion_10();
  std::printf("ACCEPTANCE: %d/10 criteria passed in %.0fs\n", 10 - g_failures,
              now() - t0);
  return g_failures == 0 ? 0 : 1;
}
