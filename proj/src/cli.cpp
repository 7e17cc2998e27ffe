#include "popcorn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace popcorn::cli {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (!key.empty()) kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
  RunConfig rc;
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("dataset")) rc.dataset = *v;
  if (auto* v = get("env")) rc.env = *v;
  if (auto* v = get("n_traj")) rc.n_traj = std::stoi(*v);
  if (auto* v = get("K")) rc.K = std::stoi(*v);
  if (auto* v = get("modes")) rc.modes = split_list(*v);
  if (auto* v = get("lambdas")) rc.lambdas = split_doubles(*v);
  if (auto* v = get("lambda_esses")) rc.lambda_esses = split_doubles(*v);
  if (auto* v = get("delta")) rc.delta = std::stod(*v);
  if (auto* v = get("folds")) rc.folds = std::stoi(*v);
  if (auto* v = get("out_dir")) rc.out_dir = *v;
  if (auto* v = get("seed")) rc.seed = static_cast<unsigned>(std::stoul(*v));
  ObjectiveConfig& oc = rc.objective;
  if (auto* v = get("restarts")) oc.restarts = std::stoi(*v);
  if (auto* v = get("max_iters")) oc.max_iters = std::stoi(*v);
  if (auto* v = get("backups_per_step")) oc.backups_per_step = std::stoi(*v);
  if (auto* v = get("k_obs")) oc.k_obs = std::stoi(*v);
  if (auto* v = get("max_beliefs")) oc.max_beliefs = std::stoi(*v);
  if (auto* v = get("temperature")) oc.temperature = std::stod(*v);
  if (auto* v = get("reset_period")) oc.reset_period = std::stoi(*v);
  if (auto* v = get("expand_period")) oc.expand_period = std::stoi(*v);
  if (auto* v = get("eps_expand")) oc.eps_expand = std::stod(*v);
  if (auto* v = get("init_action")) oc.init_action = std::stoi(*v);
  if (auto* v = get("em_max_iters")) oc.em_max_iters = std::stoi(*v);
  if (auto* v = get("warm_start_em")) oc.warm_start_em = (*v == "1" || *v == "true");
  if (auto* v = get("warm_start_iters")) oc.warm_start_iters = std::stoi(*v);
  if (rc.modes.empty() || rc.lambdas.empty() || rc.lambda_esses.empty())
    throw std::invalid_argument("modes/lambdas/lambda_esses must be non-empty");
  if (rc.folds < 1) throw std::invalid_argument("folds >= 1 required");
  if (rc.dataset.empty() == rc.env.empty())
    throw std::invalid_argument("exactly one of dataset or env required");
  return rc;
}

double PiecewiseLinearReward::operator()(double x) const {
  if (x <= points.front().first) return points.front().second;
  if (x >= points.back().first) return points.back().second;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (x <= points[i].first) {
      const auto [x0, r0] = points[i - 1];
      const auto [x1, r1] = points[i];
      return r0 + (r1 - r0) * (x - x0) / (x1 - x0);
    }
  return points.back().second;
}

void PiecewiseLinearReward::apply(Dataset& d) const {
  for (auto& tr : d.trajectories)
    for (int t = 0; t < tr.length(); ++t) {
      const double x = tr.observations[t][dim];
      if (is_missing(x))
        throw std::runtime_error("reward dimension missing at step " +
                                 std::to_string(t) + " of trajectory " +
                                 std::to_string(tr.id));
      tr.rewards[t] = (*this)(x);
    }
}

PiecewiseLinearReward PiecewiseLinearReward::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open reward spec: " + path);
  json j = json::parse(in);
  PiecewiseLinearReward r;
  r.dim = j.at("dim").get<int>();
  for (const auto& p : j.at("points"))
    r.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  if (r.points.size() < 2)
    throw std::invalid_argument("reward spec needs >= 2 breakpoints");
  for (std::size_t i = 1; i < r.points.size(); ++i)
    if (!(r.points[i].first > r.points[i - 1].first))
      throw std::invalid_argument("reward spec x must be strictly increasing");
  return r;
}

std::vector<int> fold_assignments(int n, int folds, unsigned seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(n);
  for (int i = 0; i < n; ++i) fold[order[i]] = i % folds;
  return fold;
}

OpeReport evaluate_policy_ope(const PomdpParams& p, const ValueFunction& vf,
                              const Dataset& d, double delta,
                              int init_action) {
  const auto alphas = to_alpha_vecs(vf);
  std::vector<std::vector<double>> pol(d.size());
  for (int n = 0; n < d.size(); ++n) {
    const Trajectory& tr = d.trajectories[n];
    FilterResult<double> fr = filter_trajectory(p, tr, init_action);
    pol[n].reserve(tr.length());
    for (int t = 0; t < tr.length(); ++t) {
      std::vector<double> dist =
          policy_action_dist_soft(alphas, fr.beliefs[t], vf.temperature);
      std::vector<double> restricted =
          restrict_policy_support(dist, tr.behavior_probs[t], delta);
      pol[n].push_back(restricted[tr.actions[t]]);
    }
  }
  return cwpdis(d, pol, d.gamma);
}

TigerVariant tiger_variant_from_string(const std::string& s) {
  if (s == "tiger_irrelevant_noise") return TigerVariant::kIrrelevantNoise;
  if (s == "tiger_missing_data") return TigerVariant::kMissingData;
  if (s == "tiger_wrong_likelihood") return TigerVariant::kWrongLikelihood;
  throw std::invalid_argument("unknown env: " + s);
}

namespace {

Dataset make_env_dataset(const std::string& env, int n, unsigned seed,
                         double missing_frac) {
  TigerSpec spec = tiger_spec(tiger_variant_from_string(env));
  if (missing_frac >= 0.0) spec.missing_frac = missing_frac;
  return generate_tiger_dataset(spec, n, seed);
}

struct TrainCell {
  int fold;
  std::string mode;
  double lambda, lambda_ess;
};

std::string cell_tag(const TrainCell& c) {
  std::ostringstream os;
  os << "fold" << c.fold << "_" << c.mode << "_lam" << fmt(c.lambda)
     << "_less" << fmt(c.lambda_ess);
  return os.str();
}

int cmd_train(const RunConfig& rc) {
  Dataset full = rc.dataset.empty()
                     ? make_env_dataset(rc.env, rc.n_traj, rc.seed, -1.0)
                     : load_dataset_jsonl(rc.dataset);
  fs::create_directories(rc.out_dir);
  if (rc.dataset.empty())
    save_dataset_jsonl(rc.out_dir + "/dataset.jsonl", full);

  const std::vector<int> fold_of =
      fold_assignments(full.size(), rc.folds, rc.seed);
  std::ofstream csv(rc.out_dir + "/results.csv");
  csv << "fold,mode,lambda,lambda_ess,train_loglik_per_scalar,"
         "test_loglik_per_scalar,cwpdis_value_test,ess_total_test\n";
  json manifest;
  manifest["seed"] = rc.seed;
  manifest["artifacts"] = json::array();
  manifest["artifacts"].push_back("results.csv");
  if (rc.dataset.empty()) manifest["artifacts"].push_back("dataset.jsonl");

  std::vector<TrainCell> cells;
  for (int f = 0; f < rc.folds; ++f)
    for (const auto& m : rc.modes) {
      if (m == "two_stage") {
        cells.push_back({f, m, 0.0, 0.0});
      } else if (m == "value_only") {
        for (double le : rc.lambda_esses) cells.push_back({f, m, 0.0, le});
      } else {
        for (double l : rc.lambdas)
          for (double le : rc.lambda_esses) cells.push_back({f, m, l, le});
      }
    }

  bool partial = false;
  for (const TrainCell& cell : cells) {
    Dataset train_d, test_d;
    train_d.A = test_d.A = full.A;
    train_d.D = test_d.D = full.D;
    train_d.gamma = test_d.gamma = full.gamma;
    for (int i = 0; i < full.size(); ++i) {
      if (rc.folds > 1 && fold_of[i] == cell.fold)
        test_d.trajectories.push_back(full.trajectories[i]);
      else
        train_d.trajectories.push_back(full.trajectories[i]);
    }
    if (rc.folds == 1) test_d = train_d;

    ObjectiveConfig cfg = rc.objective;
    cfg.mode = mode_from_string(cell.mode);
    cfg.lambda = cell.lambda;
    cfg.lambda_ess = cell.lambda_ess;
    cfg.delta = rc.delta;
    cfg.seed = rc.seed;
    const std::string tag = cell_tag(cell);
    try {
      TrainResult res = cfg.mode == Mode::kTwoStage
                            ? two_stage_train(train_d, rc.K, cfg)
                            : train(train_d, rc.K, cfg);
      const double train_ll =
          log_marginal_likelihood(train_d, res.params, cfg.init_action) /
          train_d.observed_scalar_count();
      const double test_ll =
          log_marginal_likelihood(test_d, res.params, cfg.init_action) /
          test_d.observed_scalar_count();
      OpeReport ope = evaluate_policy_ope(res.params, res.vf, test_d,
                                          rc.delta, cfg.init_action);
      csv << cell.fold << "," << cell.mode << "," << fmt(cell.lambda) << ","
          << fmt(cell.lambda_ess) << "," << fmt(train_ll) << ","
          << fmt(test_ll) << "," << fmt(ope.value) << ","
          << fmt(ope.ess_total) << "\n";
      csv.flush();

      Checkpoint ck{res.params, cfg.init_action, res.vf};
      save_checkpoint(rc.out_dir + "/ck_" + tag + ".json", ck);
      manifest["artifacts"].push_back("ck_" + tag + ".json");
      std::ofstream trace(rc.out_dir + "/trace_" + tag + ".csv");
      trace << "iter,loglik_per_scalar,policy_value,ess_total,total,"
               "wall_time\n";
      for (const auto& row : res.trace)
        trace << row.iter << "," << fmt(row.loglik_rescaled) << ","
              << fmt(row.policy_value) << "," << fmt(row.ess_total) << ","
              << fmt(row.total) << "," << fmt(row.wall_time) << "\n";
      manifest["artifacts"].push_back("trace_" + tag + ".csv");
    } catch (const std::exception& e) {
      std::cerr << "cell " << tag << " failed: " << e.what() << "\n";
      partial = true;
    }
  }
  std::ofstream(rc.out_dir + "/manifest.json") << manifest.dump(2) << "\n";
  return partial ? kPartialRun : kOk;
}

void check_shapes(const Checkpoint& ck, const Dataset& d) {
  if (ck.params.A != d.A || ck.params.D != d.D)
    throw std::invalid_argument("checkpoint/dataset shape mismatch: A,D = " +
                                std::to_string(ck.params.A) + "," +
                                std::to_string(ck.params.D) + " vs " +
                                std::to_string(d.A) + "," +
                                std::to_string(d.D));
}

int cmd_evaluate(const std::string& ck_path, const std::string& dataset,
                 const std::string& env, int rollouts, unsigned seed,
                 double delta, bool hard, const std::string& out_path) {
  Checkpoint ck = load_checkpoint(ck_path);
  if (!ck.value_function)
    throw std::invalid_argument("checkpoint has no value function");
  std::ostringstream out;
  if (!dataset.empty()) {
    Dataset d = load_dataset_jsonl(dataset);
    check_shapes(ck, d);
    OpeReport r = evaluate_policy_ope(ck.params, *ck.value_function, d, delta,
                                      ck.init_action);
    out << ope_report_json(r) << "\n";
  } else {
    TigerSpec spec = tiger_spec(tiger_variant_from_string(env));
    ModelPolicy pol(ck.params, *ck.value_function, !hard, ck.init_action);
    RolloutStats st = rollout_evaluate(pol, spec, rollouts, seed);
    out << "rollout_mean=" << fmt(st.mean) << " stderr=" << fmt(st.stderr_)
        << " n=" << st.n << "\n";
  }
  if (out_path.empty())
    std::cout << out.str();
  else
    std::ofstream(out_path) << out.str();
  return kOk;
}

int cmd_forecast(const std::string& ck_path, const std::string& dataset,
                 int prefix, int horizon, const std::string& out_path) {
  Checkpoint ck = load_checkpoint(ck_path);
  Dataset d = load_dataset_jsonl(dataset);
  check_shapes(ck, d);
  const int D = d.D;
  std::vector<std::vector<double>> abs_err(D,
                                           std::vector<double>(horizon, 0.0));
  std::vector<std::vector<long>> count(D, std::vector<long>(horizon, 0));
  int eligible = 0;
  for (const auto& tr : d.trajectories) {
    if (tr.length() <= prefix) continue;
    ++eligible;
    const int H = std::min<int>(horizon, tr.length() - prefix);
    std::vector<int> future(tr.actions.begin() + prefix,
                            tr.actions.begin() + prefix + H);
    auto pred = forecast(ck.params, tr, future, H, ck.init_action);
    for (int h = 0; h < H; ++h)
      for (int dd = 0; dd < D; ++dd) {
        const double truth = tr.observations[prefix + h][dd];
        if (is_missing(truth)) continue;
        abs_err[dd][h] += std::abs(pred[h][dd] - truth);
        ++count[dd][h];
      }
  }
  if (eligible == 0)
    throw std::invalid_argument("no trajectory longer than the prefix");
  std::ostringstream out;
  out << "dim,horizon,mae,count\n";
  for (int dd = 0; dd < D; ++dd)
    for (int h = 0; h < horizon; ++h)
      out << dd << "," << (h + 1) << ","
          << (count[dd][h] ? fmt(abs_err[dd][h] / count[dd][h])
                           : std::string("nan"))
          << "," << count[dd][h] << "\n";
  if (out_path.empty())
    std::cout << out.str();
  else
    std::ofstream(out_path) << out.str();
  return kOk;
}

int cmd_respecify(const std::string& ck_path, const std::string& dataset,
                  const std::string& reward_spec, const std::string& out_ck,
                  unsigned seed, double delta) {
  Checkpoint ck = load_checkpoint(ck_path);
  Dataset d = load_dataset_jsonl(dataset);
  check_shapes(ck, d);
  if (!reward_spec.empty()) PiecewiseLinearReward::load(reward_spec).apply(d);
  PomdpParams p = ck.params;
  p.reward = learn_rewards(d, p, ck.init_action);
  std::mt19937_64 rng(seed);
  ValueFunction vf = solve_hard(p, /*temperature=*/0.01, /*k_obs=*/100,
                                /*max_sweeps=*/60, /*tol=*/1e-5,
                                /*eps_expand=*/0.1, /*max_beliefs=*/20,
                                /*expand_every=*/10, rng);
  save_checkpoint(out_ck, Checkpoint{p, ck.init_action, vf});
  OpeReport r = evaluate_policy_ope(p, vf, d, delta, ck.init_action);
  std::cout << "cwpdis_value=" << fmt(r.value)
            << " ess_total=" << fmt(r.ess_total) << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Batch off-policy POMDP learning"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Generate a benchmark dataset");
  std::string g_env = "tiger_irrelevant_noise", g_out = "dataset.jsonl";
  int g_n = 1000;
  unsigned g_seed = 0;
  double g_missing = -1.0;
  gen->add_option("--env", g_env);
  gen->add_option("--n", g_n);
  gen->add_option("--seed", g_seed);
  gen->add_option("--out", g_out);
  gen->add_option("--missing-frac", g_missing);

  auto* trn = app.add_subcommand("train", "Train models over a grid");
  std::string t_config;
  std::string t_out;
  trn->add_option("--config", t_config)->required();
  trn->add_option("--out", t_out, "Override out_dir");

  auto* ev = app.add_subcommand("evaluate", "OPE or rollout evaluation");
  std::string e_ck, e_data, e_env, e_out;
  int e_rollouts = 1000;
  unsigned e_seed = 0;
  double e_delta = 0.0;
  bool e_hard = false;
  ev->add_option("--checkpoint", e_ck)->required();
  ev->add_option("--dataset", e_data);
  ev->add_option("--env", e_env);
  ev->add_option("--rollouts", e_rollouts);
  ev->add_option("--seed", e_seed);
  ev->add_option("--delta", e_delta);
  ev->add_flag("--hard", e_hard, "Deterministic policy");
  ev->add_option("--out", e_out);

  auto* fc = app.add_subcommand("forecast", "Observation forecasting MAE");
  std::string f_ck, f_data, f_out;
  int f_prefix = 5, f_horizon = 5;
  fc->add_option("--checkpoint", f_ck)->required();
  fc->add_option("--dataset", f_data)->required();
  fc->add_option("--prefix", f_prefix);
  fc->add_option("--horizon", f_horizon);
  fc->add_option("--out", f_out);

  auto* rs = app.add_subcommand("respecify-reward",
                                "Re-learn rewards with frozen dynamics");
  std::string r_ck, r_data, r_spec, r_out = "respecified.json";
  unsigned r_seed = 0;
  double r_delta = 0.0;
  rs->add_option("--checkpoint", r_ck)->required();
  rs->add_option("--dataset", r_data)->required();
  rs->add_option("--reward-spec", r_spec);
  rs->add_option("--out", r_out);
  rs->add_option("--seed", r_seed);
  rs->add_option("--delta", r_delta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) {
      Dataset d = make_env_dataset(g_env, g_n, g_seed, g_missing);
      save_dataset_jsonl(g_out, d);
      return kOk;
    }
    if (trn->parsed()) {
      RunConfig rc = RunConfig::from_kv(parse_kv_file(t_config));
      if (!t_out.empty()) rc.out_dir = t_out;
      return cmd_train(rc);
    }
    if (ev->parsed()) {
      if (e_data.empty() == e_env.empty())
        throw std::invalid_argument("evaluate: exactly one of --dataset/--env");
      return cmd_evaluate(e_ck, e_data, e_env, e_rollouts, e_seed, e_delta,
                          e_hard, e_out);
    }
    if (fc->parsed())
      return cmd_forecast(f_ck, f_data, f_prefix, f_horizon, f_out);
    if (rs->parsed())
      return cmd_respecify(r_ck, r_data, r_spec, r_out, r_seed, r_delta);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalError;
  }
  return kConfigError;
}

}  // namespace popcorn::cli
