#include "popcorn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace popcorn {

using nlohmann::json;

std::string checkpoint_to_json(const Checkpoint& ck) {
  const PomdpParams& p = ck.params;
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["K"] = p.K;
  j["A"] = p.A;
  j["D"] = p.D;
  j["gamma"] = p.gamma;
  j["init_action"] = ck.init_action;
  j["tau0"] = p.tau0;
  j["tau"] = p.tau;
  j["mu"] = p.mu;
  j["sigma"] = p.sigma;
  j["reward"] = p.reward;
  if (ck.value_function) {
    const ValueFunction& vf = *ck.value_function;
    json jvf;
    jvf["temperature"] = vf.temperature;
    json alphas = json::array();
    for (const auto& a : vf.alphas)
      alphas.push_back({{"values", a.values}, {"action_dist", a.action_dist}});
    jvf["alphas"] = alphas;
    json beliefs = json::array();
    for (const auto& b : vf.beliefs) beliefs.push_back(b.probs);
    jvf["beliefs"] = beliefs;
    j["value_function"] = jvf;
  }
  return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version");
  Checkpoint ck;
  PomdpParams& p = ck.params;
  p.K = j.at("K").get<int>();
  p.A = j.at("A").get<int>();
  p.D = j.at("D").get<int>();
  p.gamma = j.at("gamma").get<double>();
  ck.init_action = j.at("init_action").get<int>();
  p.tau0 = j.at("tau0").get<std::vector<double>>();
  p.tau = j.at("tau").get<std::vector<double>>();
  p.mu = j.at("mu").get<std::vector<double>>();
  p.sigma = j.at("sigma").get<std::vector<double>>();
  p.reward = j.at("reward").get<std::vector<double>>();
  validate(p);
  if (j.contains("value_function")) {
    const json& jvf = j.at("value_function");
    ValueFunction vf;
    vf.temperature = jvf.at("temperature").get<double>();
    for (const auto& a : jvf.at("alphas")) {
      AlphaVector av;
      av.values = a.at("values").get<std::vector<double>>();
      av.action_dist = a.at("action_dist").get<std::vector<double>>();
      vf.alphas.push_back(std::move(av));
    }
    for (const auto& b : jvf.at("beliefs"))
      vf.beliefs.push_back({b.get<std::vector<double>>()});
    ck.value_function = std::move(vf);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << checkpoint_to_json(ck);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return checkpoint_from_json(text);
}

}  // namespace popcorn
