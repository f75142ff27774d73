#pragma once

#include <string>
#include <vector>

#include "qcofr/replay.hpp"

namespace qcofr {

// Episode logs are JSON-lines: one record per transition plus a trailing
// record per episode holding the terminal observation. Consumed by the
// interpretability reports and round-trippable back into Episode structs.
void write_episode_log(const std::string& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_episode_log(const std::string& path);

}  // namespace qcofr
