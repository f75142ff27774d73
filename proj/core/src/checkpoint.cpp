#include "qcofr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace qcofr {

namespace {
constexpr char kMagic[8] = {'Q', 'C', 'F', 'R', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const ParamStore& params, const RunConfig& cfg) {
  nlohmann::json header;
  header["version"] = 1;
  header["config"] = to_ini(cfg);
  auto& arrays = header["arrays"] = nlohmann::json::array();
  for (int i = 0; i < params.size(); ++i) {
    const Tensor& t = params.at(i);
    arrays.push_back({{"name", params.name(i)},
                      {"rows", t.shape.rows},
                      {"cols", t.shape.cols}});
  }
  const std::string head = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot write '" + path + "'");
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = head.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (int i = 0; i < params.size(); ++i) {
    const Tensor& t = params.at(i);
    f.write(reinterpret_cast<const char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!f) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

namespace {

nlohmann::json read_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint: '" + path + "' is not a checkpoint file");
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  f.read(head.data(), static_cast<std::streamsize>(len));
  if (!f) throw CheckpointError("checkpoint: truncated header in '" + path + "'");
  return nlohmann::json::parse(head);
}

}  // namespace

RunConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  const nlohmann::json header = read_header(f, path);
  return parse_config(header.at("config").get<std::string>(), path + "#config");
}

RunConfig load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  const nlohmann::json header = read_header(f, path);
  const auto& arrays = header.at("arrays");
  if (static_cast<int>(arrays.size()) != params.size())
    throw CheckpointError("checkpoint: holds " + std::to_string(arrays.size()) +
                          " arrays, expected " + std::to_string(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    const auto& a = arrays[static_cast<std::size_t>(i)];
    const std::string name = a.at("name").get<std::string>();
    const Shape shape{a.at("rows").get<int>(), a.at("cols").get<int>()};
    Tensor& t = params.at(i);
    if (name != params.name(i))
      throw CheckpointError("checkpoint: array " + std::to_string(i) + " is '" + name +
                            "', expected '" + params.name(i) + "'");
    if (!(shape == t.shape))
      throw CheckpointError("checkpoint: array '" + name + "' has shape " + shape.str() +
                            ", expected " + t.shape.str());
    f.read(reinterpret_cast<char*>(t.values.data()),
           static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!f) throw CheckpointError("checkpoint: truncated payload in '" + path + "'");
  return parse_config(header.at("config").get<std::string>(), path + "#config");
}

}  // namespace qcofr
