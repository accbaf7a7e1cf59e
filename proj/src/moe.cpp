#include "mome/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mome/error.hpp"
#include "mome/rng.hpp"
#include "mome/tensor_ops.hpp"

namespace mome {

GluExpert GluExpert::init(std::size_t d, std::size_t hidden,
                          RandomStream& rng) {
  GluExpert e;
  double s_in = 1.0 / std::sqrt(static_cast<double>(d));
  double s_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
  e.W_up = Tensor::randn(hidden, d, rng, s_in);
  e.W_gate = Tensor::randn(hidden, d, rng, s_in);
  e.W_down = Tensor::randn(d, hidden, rng, s_hid);
  return e;
}

Router Router::init(std::size_t experts, std::size_t d, RandomStream& rng,
                    RouterActivation act) {
  Router r;
  r.W_g = Tensor::randn(experts, d, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  r.activation = act;
  return r;
}

MoELayer MoELayer::init(std::size_t experts, int K, std::size_t d,
                        std::size_t hidden, RandomStream& rng,
                        RouterActivation act) {
  if (K < 1 || static_cast<std::size_t>(K) > experts) {
    throw ConfigError("MoELayer: K=" + std::to_string(K) + " outside [1, " +
                      std::to_string(experts) + "]");
  }
  MoELayer layer;
  layer.router = Router::init(experts, d, rng, act);
  layer.experts.reserve(experts);
  for (std::size_t i = 0; i < experts; ++i) {
    layer.experts.push_back(GluExpert::init(d, hidden, rng));
  }
  layer.K = K;
  return layer;
}

Tensor glu_expert_forward(const GluExpert& e, const Tensor& x) {
  Tensor up = matmul(x, transpose(e.W_up));
  Tensor gate = matmul(x, transpose(e.W_gate));
  Tensor h = hadamard(silu(up), gate);
  return matmul(h, transpose(e.W_down));
}

namespace {

Tensor apply_router_activation(Tensor scores, RouterActivation act) {
  switch (act) {
    case RouterActivation::softmax:
      return softmax_rows(scores);
    case RouterActivation::sigmoid:
      return sigmoid(scores);
    case RouterActivation::identity:
      return scores;
  }
  throw ConfigError("unknown router activation");
}

}  // namespace

Tensor route(const Router& r, const Tensor& x) {
  return apply_router_activation(matmul(x, transpose(r.W_g)), r.activation);
}

std::vector<std::size_t> topk_indices(const Tensor& g, int K) {
  if (g.rows != 1) {
    throw DimensionError("topk expects a 1xE score row, got " + g.shape_str());
  }
  std::size_t E = g.cols;
  if (K < 1 || static_cast<std::size_t>(K) > E) {
    throw ConfigError("topk: K=" + std::to_string(K) + " outside [1, " +
                      std::to_string(E) + "]");
  }
  std::vector<std::size_t> order(E);
  std::iota(order.begin(), order.end(), 0);
  // stable_sort keeps equal scores in index order, giving the lowest-index
  // tie-break.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return g.data[a] > g.data[b];
  });
  order.resize(static_cast<std::size_t>(K));
  std::sort(order.begin(), order.end());
  return order;
}

Tensor topk_mask(const Tensor& g, int K) {
  Tensor mask(1, g.cols);
  for (std::size_t i : topk_indices(g, K)) mask.data[i] = 1.0;
  return mask;
}

Tensor moe_forward(const MoELayer& layer, const Tensor& x, bool dense,
                   std::vector<TokenRouting>* log) {
  std::size_t E = layer.num_experts();
  Tensor scores = route(layer.router, x);
  std::size_t out_dim = layer.experts.empty()
                            ? x.cols
                            : layer.experts[0].W_down.rows;
  Tensor out(x.rows, out_dim);
  for (std::size_t n = 0; n < x.rows; ++n) {
    Tensor row(1, x.cols);
    std::copy(&x.data[n * x.cols], &x.data[(n + 1) * x.cols], row.data.begin());
    Tensor g_row(1, E);
    std::copy(&scores.data[n * E], &scores.data[(n + 1) * E],
              g_row.data.begin());
    std::vector<std::size_t> selected;
    if (dense) {
      selected.resize(E);
      std::iota(selected.begin(), selected.end(), 0);
    } else {
      selected = topk_indices(g_row, layer.K);
    }
    for (std::size_t i : selected) {
      Tensor fi = glu_expert_forward(layer.experts[i], row);
      double gi = g_row.data[i];
      for (std::size_t j = 0; j < out_dim; ++j) {
        out.at(n, j) += gi * fi.data[j];
      }
    }
    if (log) {
      TokenRouting tr;
      tr.scores_pre = g_row.data;
      tr.scores_post = g_row.data;
      tr.selected_pre = topk_indices(g_row, layer.K);
      tr.selected_post = tr.selected_pre;
      log->push_back(std::move(tr));
    }
  }
  return out;
}

std::vector<GluExpert> decompose_mlp(const Tensor& W_up, const Tensor& W_gate,
                                     const Tensor& W_down, int E) {
  if (E < 1) {
    throw ConfigError("decompose_mlp: E=" + std::to_string(E));
  }
  std::size_t hidden = W_up.rows;
  if (!W_up.same_shape(W_gate)) {
    throw DimensionError("decompose_mlp: W_up " + W_up.shape_str() +
                         " vs W_gate " + W_gate.shape_str());
  }
  if (W_down.cols != hidden) {
    throw DimensionError("decompose_mlp: W_down " + W_down.shape_str() +
                         " inconsistent with hidden=" + std::to_string(hidden));
  }
  if (hidden % static_cast<std::size_t>(E) != 0) {
    throw ConfigError("decompose_mlp: hidden=" + std::to_string(hidden) +
                      " not divisible by E=" + std::to_string(E));
  }
  std::size_t C = hidden / static_cast<std::size_t>(E);
  std::size_t d = W_up.cols;
  std::size_t r = W_down.rows;
  std::vector<GluExpert> subs;
  subs.reserve(static_cast<std::size_t>(E));
  for (int e = 0; e < E; ++e) {
    std::size_t h0 = static_cast<std::size_t>(e) * C;
    GluExpert sub;
    sub.W_up = Tensor(C, d);
    sub.W_gate = Tensor(C, d);
    sub.W_down = Tensor(r, C);
    for (std::size_t i = 0; i < C; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        sub.W_up.at(i, j) = W_up.at(h0 + i, j);
        sub.W_gate.at(i, j) = W_gate.at(h0 + i, j);
      }
      for (std::size_t j = 0; j < r; ++j) {
        sub.W_down.at(j, i) = W_down.at(j, h0 + i);
      }
    }
    subs.push_back(std::move(sub));
  }
  return subs;
}

double truncation_error(const std::vector<GluExpert>& experts, const Tensor& g,
                        int K, const Tensor& x) {
  std::size_t E = experts.size();
  if (g.size() != E) {
    throw DimensionError("truncation_error: " + std::to_string(E) +
                         " experts but " + std::to_string(g.size()) +
                         " scores");
  }
  Tensor g_row = g.reshaped(1, E);
  std::vector<std::size_t> kept = topk_indices(g_row, K);
  std::vector<bool> in_topk(E, false);
  for (std::size_t i : kept) in_topk[i] = true;

  Tensor acc;
  bool first = true;
  for (std::size_t i = 0; i < E; ++i) {
    if (in_topk[i]) continue;
    Tensor fi = scale(glu_expert_forward(experts[i], x), g_row.data[i]);
    if (first) {
      acc = fi;
      first = false;
    } else {
      acc = add(acc, fi);
    }
  }
  if (first) return 0.0;  // K == E, nothing discarded
  double n = norm(acc);
  return n * n;
}

Var glu_expert_node(Graph& g, const GluExpert& e, Var x) {
  Var up = g.matmul(x, g.transpose(g.param(e.W_up)));
  Var gate = g.matmul(x, g.transpose(g.param(e.W_gate)));
  Var h = g.mul(g.silu(up), gate);
  return g.matmul(h, g.transpose(g.param(e.W_down)));
}

Var router_scores_node(Graph& g, const Router& r, Var x) {
  Var s = g.matmul(x, g.transpose(g.param(r.W_g)));
  switch (r.activation) {
    case RouterActivation::softmax:
      return g.softmax_rows(s);
    case RouterActivation::sigmoid:
      return g.sigmoid(s);
    case RouterActivation::identity:
      return s;
  }
  throw ConfigError("unknown router activation");
}

Var moe_node(Graph& g, const MoELayer& layer, Var x, bool dense,
             std::vector<TokenRouting>* log, std::vector<Var>* score_vars) {
  std::size_t E = layer.num_experts();
  std::size_t N = g.value(x).rows;
  Var scores = router_scores_node(g, layer.router, x);
  if (score_vars) score_vars->push_back(scores);

  Var out{-1};
  for (std::size_t n = 0; n < N; ++n) {
    Var row = g.slice_rows(x, n, 1);
    Tensor g_row(1, E);
    std::copy(&g.value(scores).data[n * E], &g.value(scores).data[(n + 1) * E],
              g_row.data.begin());
    std::vector<std::size_t> selected;
    if (dense) {
      selected.resize(E);
      std::iota(selected.begin(), selected.end(), 0);
    } else {
      selected = topk_indices(g_row, layer.K);
    }
    Var token_out{-1};
    for (std::size_t i : selected) {
      Var fi = glu_expert_node(g, layer.experts[i], row);
      Var term = g.scalar_mul(g.pick(scores, n, i), fi);
      token_out = token_out.id < 0 ? term : g.add(token_out, term);
    }
    out = out.id < 0 ? token_out : g.concat_rows(out, token_out);
    if (log) {
      TokenRouting tr;
      tr.scores_pre = g_row.data;
      tr.scores_post = g_row.data;
      tr.selected_pre = topk_indices(g_row, layer.K);
      tr.selected_post = tr.selected_pre;
      log->push_back(std::move(tr));
    }
  }
  return out;
}

}  // namespace mome
