#include "popcorn/trajectory.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace popcorn {

using nlohmann::json;

int Dataset::max_length() const {
  int m = 0;
  for (const auto& t : trajectories) m = std::max(m, t.length());
  return m;
}

long Dataset::observed_scalar_count() const {
  long c = 0;
  for (const auto& t : trajectories)
    for (const auto& o : t.observations)
      for (double x : o)
        if (!is_missing(x)) ++c;
  return c;
}

void validate(const Dataset& d) {
  for (const auto& t : d.trajectories) {
    const std::size_t T = t.actions.size();
    if (T < 1) throw std::invalid_argument("trajectory: empty");
    if (t.observations.size() != T || t.rewards.size() != T)
      throw std::invalid_argument("trajectory: sequence length mismatch");
    for (int a : t.actions)
      if (a < 0 || a >= d.A)
        throw std::invalid_argument("trajectory: action index out of range");
    for (const auto& o : t.observations)
      if (static_cast<int>(o.size()) != d.D)
        throw std::invalid_argument("trajectory: observation dimension mismatch");
    if (!t.behavior_probs.empty()) {
      if (t.behavior_probs.size() != T)
        throw std::invalid_argument("trajectory: behavior_probs length mismatch");
      for (const auto& row : t.behavior_probs) {
        if (static_cast<int>(row.size()) != d.A)
          throw std::invalid_argument("trajectory: behavior_probs width");
        double s = 0.0;
        for (double p : row) {
          if (p < 0.0)
            throw std::invalid_argument("trajectory: negative behavior prob");
          s += p;
        }
        if (std::abs(s - 1.0) > 1e-6)
          throw std::invalid_argument("trajectory: behavior row not normalized");
      }
    }
  }
}

namespace {

json obs_to_json(const std::vector<double>& o) {
  json arr = json::array();
  for (double x : o) {
    if (is_missing(x))
      arr.push_back(nullptr);
    else
      arr.push_back(x);
  }
  return arr;
}

std::vector<double> obs_from_json(const json& arr) {
  std::vector<double> o;
  o.reserve(arr.size());
  for (const auto& x : arr) o.push_back(x.is_null() ? kMissing : x.get<double>());
  return o;
}

}  // namespace

void save_dataset_jsonl(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  json header = {{"format_version", 1},
                 {"A", d.A},
                 {"D", d.D},
                 {"gamma", d.gamma},
                 {"n_trajectories", d.size()}};
  out << header.dump() << "\n";
  for (const auto& t : d.trajectories) {
    json rec;
    rec["id"] = t.id;
    rec["actions"] = t.actions;
    json obs = json::array();
    for (const auto& o : t.observations) obs.push_back(obs_to_json(o));
    rec["observations"] = obs;
    rec["rewards"] = t.rewards;
    if (!t.behavior_probs.empty()) rec["behavior_probs"] = t.behavior_probs;
    out << rec.dump() << "\n";
  }
}

Dataset load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty dataset file " + path);
  json header = json::parse(line);
  Dataset d;
  d.A = header.at("A").get<int>();
  d.D = header.at("D").get<int>();
  d.gamma = header.at("gamma").get<double>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Trajectory t;
    t.id = rec.value("id", 0);
    t.actions = rec.at("actions").get<std::vector<int>>();
    for (const auto& o : rec.at("observations")) {
      t.observations.push_back(obs_from_json(o));
    }
    t.rewards = rec.at("rewards").get<std::vector<double>>();
    if (rec.contains("behavior_probs"))
      t.behavior_probs =
          rec.at("behavior_probs").get<std::vector<std::vector<double>>>();
    d.trajectories.push_back(std::move(t));
  }
  validate(d);
  return d;
}

}  // namespace popcorn
