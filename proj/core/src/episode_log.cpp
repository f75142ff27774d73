#include "qcofr/episode_log.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace qcofr {

void write_episode_log(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("episode log: cannot write '" + path + "'");
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    for (int t = 0; t <= ep.length; ++t) {
      nlohmann::json rec;
      rec["episode"] = e;
      rec["t"] = t;
      rec["obs"] = ep.obs[static_cast<std::size_t>(t)];
      rec["avail"] = ep.avail[static_cast<std::size_t>(t)];
      rec["state"] = ep.state[static_cast<std::size_t>(t)];
      if (t < ep.length) {
        rec["actions"] = ep.actions[static_cast<std::size_t>(t)];
        rec["last_actions"] =
            t == 0 ? std::vector<int>(static_cast<std::size_t>(ep.n_agents), -1)
                   : ep.actions[static_cast<std::size_t>(t) - 1];
        rec["reward"] = ep.rewards[static_cast<std::size_t>(t)];
        rec["done"] = ep.done[static_cast<std::size_t>(t)] != 0;
      } else {
        rec["terminal"] = true;
      }
      f << rec.dump() << "\n";
    }
  }
}

std::vector<Episode> read_episode_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("episode log: cannot open '" + path + "'");
  std::vector<Episode> episodes;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const nlohmann::json rec = nlohmann::json::parse(line);
    const std::size_t e = rec.at("episode").get<std::size_t>();
    if (e >= episodes.size()) episodes.resize(e + 1);
    Episode& ep = episodes[e];
    ep.obs.push_back(rec.at("obs").get<std::vector<std::vector<float>>>());
    ep.avail.push_back(rec.at("avail").get<std::vector<std::uint8_t>>());
    ep.state.push_back(rec.at("state").get<std::vector<float>>());
    ep.n_agents = static_cast<int>(ep.obs.back().size());
    if (rec.contains("actions")) {
      ep.actions.push_back(rec.at("actions").get<std::vector<int>>());
      ep.rewards.push_back(rec.at("reward").get<double>());
      ep.done.push_back(rec.at("done").get<bool>() ? 1 : 0);
      ep.length = static_cast<int>(ep.actions.size());
    }
  }
  return episodes;
}

}  // namespace qcofr
