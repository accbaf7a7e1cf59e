#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "mome/backbones.hpp"

namespace mome {

// Optimization settings. Adam moments follow the common defaults; the task
// switch selects the loss (MSE for forecasting, cross-entropy for trend).
struct TrainConfig {
  double lr = 1e-3;
  int epochs = 10;
  int batch = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  TaskKind task = TaskKind::forecast;
  // Weight on the squared coefficient of variation of expert loads.
  // Zero disables the balancing term.
  double aux_balance_weight = 0.0;
};

// Where sample windows and (optionally) precomputed embeddings come from.
struct DataConfig {
  std::string train_path;
  std::string test_path;
};

struct ContextConfig {
  // "hashed" uses the deterministic bag-of-words encoder; "file" looks up
  // precomputed matrices by sample id.
  std::string provider = "hashed";
  std::string embeddings_path;
  std::size_t dprime = 64;
  std::size_t max_tokens = 32;
};

// Everything a run needs, loadable from one JSON document.
struct RunConfig {
  BackboneConfig model;
  TrainConfig train;
  DataConfig data;
  ContextConfig context;
  std::uint64_t seed = 0;
};

const char* task_kind_name(TaskKind t);
TaskKind task_kind_from(const std::string& name);
const char* router_activation_name(RouterActivation a);
RouterActivation router_activation_from(const std::string& name);
const char* mod_init_name(ModInit m);
ModInit mod_init_from(const std::string& name);

nlohmann::json backbone_config_to_json(const BackboneConfig& cfg);
// Starts from defaults, applies present keys, rejects unknown keys.
BackboneConfig backbone_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace mome
