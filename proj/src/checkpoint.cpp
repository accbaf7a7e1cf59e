#include "mome/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "mome/config.hpp"
#include "mome/error.hpp"

namespace mome {

namespace {

using nlohmann::json;

std::uint64_t to_le_bits(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap64(bits);
  }
  return bits;
}

double from_le_bits(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap64(bits);
  }
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

std::string checkpoint_sidecar_path(const std::string& path) {
  std::size_t slash = path.find_last_of('/');
  std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + ".bin";
  }
  return path.substr(0, dot) + ".bin";
}

void save_checkpoint(Backbone& model, const std::string& path) {
  json manifest;
  manifest["config"] = backbone_config_to_json(model.config());
  json tensors = json::array();
  std::vector<NamedParam> params = model.named_params();
  for (const NamedParam& p : params) {
    tensors.push_back(
        {{"name", p.name}, {"rows", p.tensor->rows}, {"cols", p.tensor->cols}});
  }
  manifest["tensors"] = std::move(tensors);

  std::ofstream mf(path);
  if (!mf) throw IoError("cannot write checkpoint manifest: " + path);
  mf << manifest.dump(2) << "\n";
  mf.close();

  std::string bin_path = checkpoint_sidecar_path(path);
  std::ofstream bf(bin_path, std::ios::binary);
  if (!bf) throw IoError("cannot write checkpoint data: " + bin_path);
  for (const NamedParam& p : params) {
    for (double v : p.tensor->data) {
      std::uint64_t bits = to_le_bits(v);
      bf.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
  }
  if (!bf) throw IoError("short write to checkpoint data: " + bin_path);
}

std::unique_ptr<Backbone> load_checkpoint(const std::string& path) {
  std::ifstream mf(path);
  if (!mf) throw IoError("cannot open checkpoint manifest: " + path);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw IoError("checkpoint manifest parse error in " + path + ": " +
                  e.what());
  }
  if (!manifest.contains("config") || !manifest.contains("tensors")) {
    throw IoError("checkpoint manifest missing config/tensors: " + path);
  }

  BackboneConfig cfg = backbone_config_from_json(manifest["config"]);
  std::unique_ptr<Backbone> model = make_backbone(cfg, 0);
  std::vector<NamedParam> params = model->named_params();
  const json& tensors = manifest["tensors"];
  if (tensors.size() != params.size()) {
    throw IoError("checkpoint tensor count " + std::to_string(tensors.size()) +
                  " does not match model parameter count " +
                  std::to_string(params.size()));
  }

  std::string bin_path = checkpoint_sidecar_path(path);
  std::ifstream bf(bin_path, std::ios::binary);
  if (!bf) throw IoError("cannot open checkpoint data: " + bin_path);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& t = tensors[i];
    std::string name = t.at("name").get<std::string>();
    std::size_t rows = t.at("rows").get<std::size_t>();
    std::size_t cols = t.at("cols").get<std::size_t>();
    if (name != params[i].name) {
      throw IoError("checkpoint tensor #" + std::to_string(i) + " named '" +
                    name + "', model expects '" + params[i].name + "'");
    }
    if (rows != params[i].tensor->rows || cols != params[i].tensor->cols) {
      throw DimensionError("checkpoint tensor '" + name + "' is " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           ", model expects " + params[i].tensor->shape_str());
    }
    for (double& v : params[i].tensor->data) {
      std::uint64_t bits;
      bf.read(reinterpret_cast<char*>(&bits), sizeof(bits));
      if (!bf) throw IoError("checkpoint data truncated: " + bin_path);
      v = from_le_bits(bits);
    }
  }
  return model;
}

}  // namespace mome
