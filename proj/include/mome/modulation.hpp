#pragma once

#include <vector>

#include "mome/graph.hpp"
#include "mome/moe.hpp"
#include "mome/tensor.hpp"

namespace mome {

// Cross-attention distiller: m trainable queries attend over the projected
// context states and produce m context tokens.
struct QueryPool {
  Tensor Q;       // m x d, rows initialized orthonormal
  Tensor W_Q;     // d x d
  Tensor W_K;     // d x d
  Tensor W_V;     // d x d
  Tensor W_proj;  // d_prime x d

  static QueryPool init(std::size_t m, std::size_t d, std::size_t d_prime,
                        RandomStream& rng);

  std::size_t num_queries() const { return Q.rows; }
  std::size_t dim() const { return Q.cols; }
  std::size_t ctx_dim() const { return W_proj.rows; }
};

// Additive shift of routing scores, applied after the router activation.
struct RouterModulator {
  Tensor W_G;  // E x d

  static RouterModulator zeros(std::size_t experts, std::size_t d);
  static RouterModulator random(std::size_t experts, std::size_t d,
                                RandomStream& rng, double scale);
};

// Per-expert scale-and-bias conditioning of expert outputs.
struct EilmModulator {
  std::vector<Tensor> w;  // E tensors of 1 x d (scale heads)
  std::vector<Tensor> W;  // E tensors of out x d (bias heads)
  // true: gamma = 1 + w_i . z, so zero parameters give the identity map.
  // false: gamma = w_i . z, the literal scale-and-bias form.
  bool residual_scale = true;

  static EilmModulator zeros(std::size_t experts, std::size_t out_dim,
                             std::size_t d);
  static EilmModulator random(std::size_t experts, std::size_t out_dim,
                              std::size_t d, RandomStream& rng, double scale);
};

struct ModulationPack {
  QueryPool qp;
  RouterModulator rm;
  EilmModulator em;
};

// m distilled context tokens plus their average pooling.
struct ContextTokens {
  Tensor Z;  // m x d
  Tensor z;  // 1 x d, column mean of Z
};

// H = H_raw W_proj; Z = softmax(Q W_Q (H W_K)^T / sqrt(d)) H W_V;
// z = mean over the m rows of Z. H_raw must have at least one row.
// attn_out, when given, receives the m x M attention matrix.
ContextTokens distill_context(const QueryPool& qp, const Tensor& H_raw,
                              Tensor* attn_out = nullptr);

// g + W_G z. Both selection and weighting downstream use the shifted scores.
Tensor router_modulate(const RouterModulator& rm, const Tensor& g,
                       const Tensor& z);

// gamma * f_out + beta with gamma = (1 +) w_i . z and beta = W_i z.
Tensor eilm_modulate(const EilmModulator& em, std::size_t i,
                     const Tensor& f_out, const Tensor& z);

// Modulated mixture: Top-K over the shifted scores, each selected expert
// output passed through its scale-and-bias head, weighted by the shifted
// score. Null modulators disable the corresponding step.
Tensor mome_layer_forward(const MoELayer& layer, const RouterModulator* rm,
                          const EilmModulator* em, const Tensor& x,
                          const ContextTokens& ctx,
                          std::vector<TokenRouting>* log = nullptr);

// Graph builders.
struct ContextNodes {
  Var Z;
  Var z;
};

ContextNodes distill_context_node(Graph& g, const QueryPool& qp, Var H_raw);

Var mome_node(Graph& g, const MoELayer& layer, const RouterModulator* rm,
              const EilmModulator* em, Var x, Var z,
              std::vector<TokenRouting>* log = nullptr,
              std::vector<Var>* score_vars = nullptr);

}  // namespace mome
