#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mome/graph.hpp"
#include "mome/modulation.hpp"
#include "mome/moe.hpp"
#include "mome/tensor.hpp"

namespace mome {

enum class BackboneKind {
  mome,
  mmlinear,
  mitransformer,
  dlinear_moe,
  tsmixer_moe,
  itransformer_moe,
};

enum class TaskKind { forecast, trend };

enum class ModInit { zero, random };

struct BackboneConfig {
  BackboneKind kind = BackboneKind::mome;
  TaskKind task = TaskKind::forecast;

  std::size_t lookback = 56;   // T
  std::size_t horizon = 8;     // H
  std::size_t channels = 1;    // C
  std::size_t n_classes = 3;   // trend task logits

  int layers = 3;
  std::size_t d = 32;           // token dim
  std::size_t expert_hidden = 32;
  std::size_t experts = 4;      // E
  int topk = 2;                 // K
  std::size_t heads = 4;        // transformer kinds
  std::size_t patch_len = 8;
  std::size_t stride = 8;
  std::size_t ma_kernel = 25;   // dlinear trend window, odd
  double dropout = 0.1;
  bool use_moe = true;          // false: plain (single-expert, ungated) blocks
  bool instance_norm = true;    // subtract last lookback value, restore output
  RouterActivation router_activation = RouterActivation::softmax;

  // modulation (multi-modal kinds: mome, mmlinear, mitransformer)
  bool modulation = true;
  bool router_mod = true;
  bool eilm = true;
  std::size_t ctx_tokens = 3;  // m
  std::size_t ctx_dim = 64;    // d', surrogate LLM hidden width
  ModInit mod_init = ModInit::zero;
  double mod_init_scale = 0.1;
};

// Learned patch embedding: splits a series into (possibly overlapping)
// length-L patches and projects each to d dims.
struct PatchConfig {
  std::size_t patch_len = 8;
  std::size_t stride = 8;
  Tensor embed;  // d x L
};

// Raw patch matrix, N x L with N = floor((T-L)/stride)+1.
Tensor extract_patches(const Tensor& series, std::size_t patch_len,
                       std::size_t stride);

// Embedded patches, N x d.
Tensor patchify(const Tensor& series, const PatchConfig& cfg);

// Centered moving average with edge replication; seasonal = x - trend.
// Column-wise over a T x C matrix. k must be odd and at most T.
void moving_average_decompose(const Tensor& x, std::size_t k, Tensor* seasonal,
                              Tensor* trend);

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct ForwardOptions {
  // Non-null enables dropout (training mode) with this stream.
  RandomStream* dropout_rng = nullptr;
  // When set, receives one TokenRouting per (layer, token).
  std::vector<TokenRouting>* routing = nullptr;
  // When set, receives the activated (post-modulation where applicable)
  // routing score rows, for load-balance penalties.
  std::vector<Var>* score_vars = nullptr;
};

// A forecasting/classification architecture built around MoE blocks.
// Forward passes are expressed on a Graph so the same code path serves
// training and inference.
class Backbone {
 public:
  explicit Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Backbone() = default;

  const BackboneConfig& config() const { return cfg_; }
  BackboneConfig& config() { return cfg_; }

  // x: T x C lookback window (C = 1 for univariate kinds). H_raw: M x d'
  // context hidden states; pass null for uni-modal operation. Returns the
  // prediction node: 1 x H (univariate forecast), H x C (multivariate
  // forecast) or 1 x n_classes (trend logits).
  virtual Var build(Graph& g, const Tensor& x, const Tensor* H_raw,
                    const ForwardOptions& opt) = 0;

  virtual std::vector<NamedParam> named_params() = 0;

  // Value-level convenience around build().
  Tensor predict(const Tensor& x, const Tensor* H_raw = nullptr,
                 const ForwardOptions& opt = {});

 protected:
  BackboneConfig cfg_;
};

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& cfg,
                                        std::uint64_t seed);

const char* backbone_kind_name(BackboneKind kind);
BackboneKind backbone_kind_from(const std::string& name);

}  // namespace mome
