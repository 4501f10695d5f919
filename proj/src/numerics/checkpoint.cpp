#include "ddn/numerics/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace ddn::numerics {

using nlohmann::json;

static constexpr int kVersion = 1;
static constexpr const char* kFormat = "ddn-checkpoint";

void save_checkpoint(const std::string& path, const NamedParams& params,
                     const std::map<std::string, std::string>& meta) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["meta"] = meta;
  json p = json::object();
  for (const auto& [name, t] : params) {
    p[name] = {{"shape", t->shape}, {"data", t->data}};
  }
  j["params"] = std::move(p);
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
}

static json parse_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot read checkpoint: " + path);
  json j;
  in >> j;
  if (j.value("format", "") != kFormat)
    throw ContractError("not a " + std::string(kFormat) + " file: " + path);
  if (j.value("version", -1) != kVersion)
    throw ContractError("unsupported checkpoint version " + std::to_string(j.value("version", -1)) + " in " + path);
  return j;
}

std::map<std::string, std::string> load_checkpoint(const std::string& path, const NamedParams& params) {
  json j = parse_checkpoint(path);
  const json& p = j.at("params");
  for (const auto& [name, t] : params) {
    auto it = p.find(name);
    if (it == p.end()) throw ContractError("checkpoint missing parameter '" + name + "'");
    std::vector<int> shape = (*it).at("shape").get<std::vector<int>>();
    if (shape != t->shape)
      throw DimensionError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) + ", expected " +
                           shape_str(t->shape));
    t->data = (*it).at("data").get<std::vector<double>>();
    t->zero_grad();
  }
  return j.at("meta").get<std::map<std::string, std::string>>();
}

std::map<std::string, std::string> read_checkpoint_meta(const std::string& path) {
  json j = parse_checkpoint(path);
  return j.at("meta").get<std::map<std::string, std::string>>();
}

}  // namespace ddn::numerics
