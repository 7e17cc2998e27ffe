// Compares the serial reference likelihood/EM kernels against the
// OpenMP-parallel ones on a generated tiger dataset and reports timings.
#include <chrono>
#include <cmath>
#include <cstdio>

#include "popcorn/envs.hpp"
#include "popcorn/model.hpp"
#include "popcorn/objective.hpp"

using namespace popcorn;
using clock_t_ = std::chrono::steady_clock;

static double secs(clock_t_::time_point a, clock_t_::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

int main(int argc, char** argv) {
  int n_traj = argc > 1 ? std::atoi(argv[1]) : 1000;
  int reps = argc > 2 ? std::atoi(argv[2]) : 10;
  Dataset d = generate_tiger_dataset(
      tiger_spec(TigerVariant::kIrrelevantNoise), n_traj, 0);
  std::mt19937_64 rng(0);
  UnconstrainedParams u = init_params(d, 2, d.gamma, 0, rng);
  PomdpParams p = constrain(u);

  double ll_serial = 0.0, ll_par = 0.0;
  auto t0 = clock_t_::now();
  for (int i = 0; i < reps; ++i)
    ll_serial = log_marginal_likelihood_serial(d, p);
  auto t1 = clock_t_::now();
  for (int i = 0; i < reps; ++i) ll_par = log_marginal_likelihood(d, p);
  auto t2 = clock_t_::now();
  std::printf("loglik   serial %.3fs  parallel %.3fs  speedup %.2fx  "
              "|diff| %.3g\n",
              secs(t0, t1), secs(t1, t2), secs(t0, t1) / secs(t1, t2),
              std::fabs(ll_serial - ll_par));

  auto t3 = clock_t_::now();
  PomdpParams p2 = p;
  for (int i = 0; i < reps; ++i) p2 = em_step(d, p2);
  auto t4 = clock_t_::now();
  std::printf("em_step  %d iters in %.3fs (%.1f ms/iter), final ll %.6f\n",
              reps, secs(t3, t4), 1e3 * secs(t3, t4) / reps,
              log_marginal_likelihood(d, p2) / d.observed_scalar_count());
  return 0;
}
