#pragma once

#include <cstdint>
#include <vector>

#include "mome/graph.hpp"
#include "mome/tensor.hpp"

namespace mome {

class RandomStream;

// Gated-linear-unit expert: out = W_down * (silu(W_up x) ⊙ (W_gate x)).
// The internal activation is fixed to SiLU.
struct GluExpert {
  Tensor W_up;    // hidden x d
  Tensor W_gate;  // hidden x d
  Tensor W_down;  // out x hidden

  static GluExpert init(std::size_t d, std::size_t hidden, RandomStream& rng);
};

enum class RouterActivation { softmax, sigmoid, identity };

struct Router {
  Tensor W_g;  // E x d
  RouterActivation activation = RouterActivation::softmax;

  static Router init(std::size_t experts, std::size_t d, RandomStream& rng,
                     RouterActivation act = RouterActivation::softmax);

  std::size_t num_experts() const { return W_g.rows; }
};

struct MoELayer {
  Router router;
  std::vector<GluExpert> experts;
  int K = 1;

  static MoELayer init(std::size_t experts, int K, std::size_t d,
                       std::size_t hidden, RandomStream& rng,
                       RouterActivation act = RouterActivation::softmax);

  std::size_t num_experts() const { return experts.size(); }
  std::size_t dim() const { return router.W_g.cols; }
};

// Per-token routing trace. For an unmodulated layer the pre/post entries
// coincide.
struct TokenRouting {
  std::vector<double> scores_pre;
  std::vector<double> scores_post;
  std::vector<std::size_t> selected_pre;
  std::vector<std::size_t> selected_post;
};

// Applies the expert to each row of x. x: N×d -> N×out.
Tensor glu_expert_forward(const GluExpert& e, const Tensor& x);

// Routing scores with the router's activation applied. x: N×d -> N×E.
Tensor route(const Router& r, const Tensor& x);

// Binary mask with exactly K ones at the K largest entries of g (1×E row);
// ties broken toward the lowest index.
Tensor topk_mask(const Tensor& g, int K);

// Indices of the mask's ones, ascending.
std::vector<std::size_t> topk_indices(const Tensor& g, int K);

// Σ_i λ_i g_i(x) f_i(x) per row of x. Sparse mode (dense=false) evaluates
// only the selected experts for each token.
Tensor moe_forward(const MoELayer& layer, const Tensor& x, bool dense = false,
                   std::vector<TokenRouting>* log = nullptr);

// Splits a dense GLU MLP with E·C hidden units into E sub-experts built from
// contiguous row-blocks of W_up/W_gate and column-blocks of W_down, such that
// the sub-expert outputs sum to the original MLP's output.
std::vector<GluExpert> decompose_mlp(const Tensor& W_up, const Tensor& W_gate,
                                     const Tensor& W_down, int E);

// ‖Σ_{i∉A} g_i f_i(x)‖² where A is the Top-K set of g.
double truncation_error(const std::vector<GluExpert>& experts, const Tensor& g,
                        int K, const Tensor& x);

// Graph builders mirroring the value ops above (same math, differentiable).
// When score_vars is given, each call appends its N×E activated score matrix
// so callers can build differentiable load-balance penalties.
Var glu_expert_node(Graph& g, const GluExpert& e, Var x);
Var router_scores_node(Graph& g, const Router& r, Var x);
Var moe_node(Graph& g, const MoELayer& layer, Var x, bool dense = false,
             std::vector<TokenRouting>* log = nullptr,
             std::vector<Var>* score_vars = nullptr);

}  // namespace mome
