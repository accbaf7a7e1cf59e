#include "mome/config.hpp"

#include <fstream>
#include <set>

#include "mome/error.hpp"

namespace mome {

namespace {

using nlohmann::json;

// Tracks which keys a section consumed so leftovers can be reported.
class KeyReader {
 public:
  KeyReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) {
      throw ConfigError("config section '" + section_ + "' must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + section_ + "." + key +
                        "': " + e.what());
    }
    seen_.insert(key);
  }

  void read_enum(const char* key, std::string& out) { read(key, out); }

  // Marks a key as consumed by a nested section.
  const json* sub(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown config key '" + section_ + "." + it.key() +
                          "'");
      }
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace

const char* task_kind_name(TaskKind t) {
  return t == TaskKind::forecast ? "forecast" : "trend";
}

TaskKind task_kind_from(const std::string& name) {
  if (name == "forecast") return TaskKind::forecast;
  if (name == "trend") return TaskKind::trend;
  throw ConfigError("unknown task: " + name);
}

const char* router_activation_name(RouterActivation a) {
  switch (a) {
    case RouterActivation::softmax: return "softmax";
    case RouterActivation::sigmoid: return "sigmoid";
    case RouterActivation::identity: return "identity";
  }
  return "unknown";
}

RouterActivation router_activation_from(const std::string& name) {
  if (name == "softmax") return RouterActivation::softmax;
  if (name == "sigmoid") return RouterActivation::sigmoid;
  if (name == "identity") return RouterActivation::identity;
  throw ConfigError("unknown router activation: " + name);
}

const char* mod_init_name(ModInit m) {
  return m == ModInit::zero ? "zero" : "random";
}

ModInit mod_init_from(const std::string& name) {
  if (name == "zero") return ModInit::zero;
  if (name == "random") return ModInit::random;
  throw ConfigError("unknown modulator init: " + name);
}

nlohmann::json backbone_config_to_json(const BackboneConfig& cfg) {
  return json{
      {"kind", backbone_kind_name(cfg.kind)},
      {"task", task_kind_name(cfg.task)},
      {"lookback", cfg.lookback},
      {"horizon", cfg.horizon},
      {"channels", cfg.channels},
      {"n_classes", cfg.n_classes},
      {"layers", cfg.layers},
      {"d", cfg.d},
      {"expert_hidden", cfg.expert_hidden},
      {"experts", cfg.experts},
      {"topk", cfg.topk},
      {"heads", cfg.heads},
      {"patch_len", cfg.patch_len},
      {"stride", cfg.stride},
      {"ma_kernel", cfg.ma_kernel},
      {"dropout", cfg.dropout},
      {"use_moe", cfg.use_moe},
      {"instance_norm", cfg.instance_norm},
      {"router_activation", router_activation_name(cfg.router_activation)},
      {"modulation", cfg.modulation},
      {"router_mod", cfg.router_mod},
      {"eilm", cfg.eilm},
      {"ctx_tokens", cfg.ctx_tokens},
      {"ctx_dim", cfg.ctx_dim},
      {"mod_init", mod_init_name(cfg.mod_init)},
      {"mod_init_scale", cfg.mod_init_scale},
  };
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig cfg;
  KeyReader r(j, "model");
  std::string kind = backbone_kind_name(cfg.kind);
  std::string task = task_kind_name(cfg.task);
  std::string act = router_activation_name(cfg.router_activation);
  std::string init = mod_init_name(cfg.mod_init);
  r.read_enum("kind", kind);
  r.read_enum("task", task);
  r.read("lookback", cfg.lookback);
  r.read("horizon", cfg.horizon);
  r.read("channels", cfg.channels);
  r.read("n_classes", cfg.n_classes);
  r.read("layers", cfg.layers);
  r.read("d", cfg.d);
  r.read("expert_hidden", cfg.expert_hidden);
  r.read("experts", cfg.experts);
  r.read("topk", cfg.topk);
  r.read("heads", cfg.heads);
  r.read("patch_len", cfg.patch_len);
  r.read("stride", cfg.stride);
  r.read("ma_kernel", cfg.ma_kernel);
  r.read("dropout", cfg.dropout);
  r.read("use_moe", cfg.use_moe);
  r.read("instance_norm", cfg.instance_norm);
  r.read_enum("router_activation", act);
  r.read("modulation", cfg.modulation);
  r.read("router_mod", cfg.router_mod);
  r.read("eilm", cfg.eilm);
  r.read("ctx_tokens", cfg.ctx_tokens);
  r.read("ctx_dim", cfg.ctx_dim);
  r.read_enum("mod_init", init);
  r.read("mod_init_scale", cfg.mod_init_scale);
  r.finish();
  cfg.kind = backbone_kind_from(kind);
  cfg.task = task_kind_from(task);
  cfg.router_activation = router_activation_from(act);
  cfg.mod_init = mod_init_from(init);
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return json{
      {"lr", cfg.lr},
      {"epochs", cfg.epochs},
      {"batch", cfg.batch},
      {"seed", cfg.seed},
      {"beta1", cfg.beta1},
      {"beta2", cfg.beta2},
      {"eps", cfg.eps},
      {"task", task_kind_name(cfg.task)},
      {"aux_balance_weight", cfg.aux_balance_weight},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  KeyReader r(j, "train");
  std::string task = task_kind_name(cfg.task);
  r.read("lr", cfg.lr);
  r.read("epochs", cfg.epochs);
  r.read("batch", cfg.batch);
  r.read("seed", cfg.seed);
  r.read("beta1", cfg.beta1);
  r.read("beta2", cfg.beta2);
  r.read("eps", cfg.eps);
  r.read_enum("task", task);
  r.read("aux_balance_weight", cfg.aux_balance_weight);
  r.finish();
  cfg.task = task_kind_from(task);
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"model", backbone_config_to_json(cfg.model)},
      {"train", train_config_to_json(cfg.train)},
      {"data",
       {{"train_path", cfg.data.train_path},
        {"test_path", cfg.data.test_path}}},
      {"context",
       {{"provider", cfg.context.provider},
        {"embeddings_path", cfg.context.embeddings_path},
        {"dprime", cfg.context.dprime},
        {"max_tokens", cfg.context.max_tokens}}},
      {"seed", cfg.seed},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  KeyReader r(j, "run");
  if (const json* m = r.sub("model")) {
    cfg.model = backbone_config_from_json(*m);
  }
  if (const json* t = r.sub("train")) {
    cfg.train = train_config_from_json(*t);
  }
  if (const json* d = r.sub("data")) {
    KeyReader rd(*d, "data");
    rd.read("train_path", cfg.data.train_path);
    rd.read("test_path", cfg.data.test_path);
    rd.finish();
  }
  if (const json* c = r.sub("context")) {
    KeyReader rc(*c, "context");
    rc.read("provider", cfg.context.provider);
    rc.read("embeddings_path", cfg.context.embeddings_path);
    rc.read("dprime", cfg.context.dprime);
    rc.read("max_tokens", cfg.context.max_tokens);
    rc.finish();
  }
  r.read("seed", cfg.seed);
  r.finish();
  if (cfg.context.provider != "hashed" && cfg.context.provider != "file") {
    throw ConfigError("context.provider must be 'hashed' or 'file', got '" +
                      cfg.context.provider + "'");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << run_config_to_json(cfg).dump(2) << "\n";
}

}  // namespace mome
