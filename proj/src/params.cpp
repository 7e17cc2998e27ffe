#include "popcorn/params.hpp"

#include <cmath>
#include <sstream>

namespace popcorn {

namespace {

void check_simplex(const double* x, int n, double tol, const char* what) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (x[i] < 0.0)
      throw std::invalid_argument(std::string(what) + ": negative entry");
    sum += x[i];
  }
  if (std::abs(sum - 1.0) > tol)
    throw std::invalid_argument(std::string(what) + ": does not sum to 1");
}

}  // namespace

void validate(const PomdpParams& p, double tol) {
  if (p.K < 1 || p.A < 1 || p.D < 1)
    throw std::invalid_argument("params: bad shape");
  if (!(p.gamma > 0.0 && p.gamma < 1.0))
    throw std::invalid_argument("params: gamma must be in (0,1)");
  check_simplex(p.tau0.data(), p.K, tol, "tau0");
  for (int a = 0; a < p.A; ++a)
    for (int j = 0; j < p.K; ++j)
      check_simplex(&p.tau[(a * p.K + j) * p.K], p.K, tol, "tau row");
  for (double s : p.sigma)
    if (!(s > 0.0)) throw std::invalid_argument("params: sigma must be > 0");
  if (static_cast<int>(p.reward.size()) != p.K * p.A)
    throw std::invalid_argument("params: reward shape");
}

std::vector<double> UnconstrainedParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(flat_size());
  flat.insert(flat.end(), tau0_logits.begin(), tau0_logits.end());
  flat.insert(flat.end(), tau_logits.begin(), tau_logits.end());
  flat.insert(flat.end(), mu_raw.begin(), mu_raw.end());
  flat.insert(flat.end(), sigma_raw.begin(), sigma_raw.end());
  return flat;
}

void UnconstrainedParams::unflatten(const std::vector<double>& flat) {
  std::size_t off = 0;
  auto take = [&](std::vector<double>& dst, std::size_t n) {
    dst.assign(flat.begin() + off, flat.begin() + off + n);
    off += n;
  };
  take(tau0_logits, K);
  take(tau_logits, static_cast<std::size_t>(A) * K * K);
  take(mu_raw, static_cast<std::size_t>(A) * K * D);
  take(sigma_raw, static_cast<std::size_t>(A) * K * D);
}

std::string UnconstrainedParams::coord_name(std::size_t i) const {
  std::ostringstream os;
  std::size_t n0 = tau0_logits.size();
  std::size_t nt = tau_logits.size();
  std::size_t nm = mu_raw.size();
  if (i < n0) {
    os << "tau0_logits[k=" << i << "]";
  } else if (i < n0 + nt) {
    std::size_t r = i - n0;
    os << "tau_logits[a=" << r / (K * K) << ",j=" << (r / K) % K
       << ",k=" << r % K << "]";
  } else if (i < n0 + nt + nm) {
    std::size_t r = i - n0 - nt;
    os << "mu_raw[a=" << r / (K * D) << ",k=" << (r / D) % K << ",d=" << r % D
       << "]";
  } else {
    std::size_t r = i - n0 - nt - nm;
    os << "sigma_raw[a=" << r / (K * D) << ",k=" << (r / D) % K
       << ",d=" << r % D << "]";
  }
  return os.str();
}

UnconstrainedParams unconstrain(const PomdpParams& p) {
  static constexpr double kProbFloor = 1e-10;
  UnconstrainedParams u;
  u.K = p.K;
  u.A = p.A;
  u.D = p.D;
  u.gamma = p.gamma;
  u.reward = p.reward;
  auto logit = [](double x) { return std::log(std::max(x, kProbFloor)); };
  u.tau0_logits.resize(p.K);
  for (int k = 0; k < p.K; ++k) u.tau0_logits[k] = logit(p.tau0[k]);
  u.tau_logits.resize(p.tau.size());
  for (std::size_t i = 0; i < p.tau.size(); ++i)
    u.tau_logits[i] = logit(p.tau[i]);
  u.mu_raw = p.mu;
  u.sigma_raw.resize(p.sigma.size());
  for (std::size_t i = 0; i < p.sigma.size(); ++i)
    u.sigma_raw[i] =
        softplus_inv(std::max(p.sigma[i] - kSigmaFloor, kSigmaFloor));
  return u;
}

}  // namespace popcorn
