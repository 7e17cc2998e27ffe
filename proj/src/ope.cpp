#include "popcorn/ope.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

namespace popcorn {

BehaviorPolicyModel fit_knn_behavior(
    const std::vector<std::vector<double>>& features,
    const std::vector<int>& actions, const std::vector<double>& dist_weights,
    int k_nn, double p_floor, int A) {
  if (features.empty())
    throw std::invalid_argument("knn behavior: empty reference set");
  if (features.size() != actions.size())
    throw std::invalid_argument("knn behavior: feature/action size mismatch");
  if (k_nn < 1 || k_nn > static_cast<int>(features.size()))
    throw std::invalid_argument("knn behavior: k_nn out of range");
  for (double w : dist_weights)
    if (w < 0.0) throw std::invalid_argument("knn behavior: negative weight");
  if (!(p_floor > 0.0 && p_floor < 1.0))
    throw std::invalid_argument("knn behavior: p_floor must be in (0,1)");
  BehaviorPolicyModel m;
  m.features = features;
  m.actions = actions;
  m.dist_weights = dist_weights;
  m.k_nn = k_nn;
  m.p_floor = p_floor;
  m.A = A;
  return m;
}

namespace {

std::vector<double> neighbor_frequencies(const BehaviorPolicyModel& m,
                                         const std::vector<double>& feature) {
  const int N = static_cast<int>(m.features.size());
  std::vector<std::pair<double, int>> dist(N);
  for (int i = 0; i < N; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < feature.size(); ++j) {
      const double diff = feature[j] - m.features[i][j];
      d += m.dist_weights[j] * diff * diff;
    }
    dist[i] = {d, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + m.k_nn, dist.end());
  std::vector<double> freq(m.A, 0.0);
  for (int i = 0; i < m.k_nn; ++i) freq[m.actions[dist[i].second]] += 1.0;
  for (double& f : freq) f /= m.k_nn;
  return freq;
}

}  // namespace

std::vector<double> knn_query(const BehaviorPolicyModel& m,
                              const std::vector<double>& feature) {
  return neighbor_frequencies(m, feature);
}

std::vector<double> knn_query_at_reference(const BehaviorPolicyModel& m,
                                           int index) {
  std::vector<double> probs = neighbor_frequencies(m, m.features[index]);
  const int a = m.actions[index];
  if (probs[a] < m.p_floor) {
    // Give the realized action exactly p_floor and rescale the rest.
    const double other = 1.0 - probs[a];
    const double scale = other > 0.0 ? (1.0 - m.p_floor) / other : 0.0;
    for (int i = 0; i < m.A; ++i) probs[i] *= scale;
    probs[a] = m.p_floor;
    if (other <= 0.0) {
      // Degenerate reference: all mass was already on a.
      probs.assign(m.A, 0.0);
      probs[a] = 1.0;
    }
  }
  return probs;
}

std::string ope_report_json(const OpeReport& r) {
  nlohmann::json j;
  j["value"] = r.value;
  j["ess_per_step"] = r.ess_per_step;
  j["ess_total"] = r.ess_total;
  bool flagged = false;
  for (char c : r.no_overlap) flagged |= (c != 0);
  j["no_overlap_steps"] = flagged;
  j["weights"] = r.weights;
  return j.dump(2) + "\n";
}

}  // namespace popcorn
