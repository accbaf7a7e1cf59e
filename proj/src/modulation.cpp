#include "mome/modulation.hpp"

#include <cmath>
#include <numeric>

#include "mome/error.hpp"
#include "mome/rng.hpp"
#include "mome/tensor_ops.hpp"

namespace mome {

QueryPool QueryPool::init(std::size_t m, std::size_t d, std::size_t d_prime,
                          RandomStream& rng) {
  if (m < 1) throw ConfigError("QueryPool: m must be >= 1");
  if (m > d) {
    throw ConfigError("QueryPool: cannot orthonormalize m=" +
                      std::to_string(m) + " query rows in dimension " +
                      std::to_string(d));
  }
  QueryPool qp;
  // Gram-Schmidt over random rows; re-draw on (vanishingly unlikely)
  // degeneracy.
  qp.Q = Tensor(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (std::size_t j = 0; j < d; ++j) qp.Q.at(i, j) = rng.normal();
      for (std::size_t p = 0; p < i; ++p) {
        double proj = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          proj += qp.Q.at(i, j) * qp.Q.at(p, j);
        }
        for (std::size_t j = 0; j < d; ++j) {
          qp.Q.at(i, j) -= proj * qp.Q.at(p, j);
        }
      }
      double nrm = 0.0;
      for (std::size_t j = 0; j < d; ++j) nrm += qp.Q.at(i, j) * qp.Q.at(i, j);
      nrm = std::sqrt(nrm);
      if (nrm > 1e-8) {
        for (std::size_t j = 0; j < d; ++j) qp.Q.at(i, j) /= nrm;
        break;
      }
    }
  }
  double s = 1.0 / std::sqrt(static_cast<double>(d));
  qp.W_Q = Tensor::randn(d, d, rng, s);
  qp.W_K = Tensor::randn(d, d, rng, s);
  qp.W_V = Tensor::randn(d, d, rng, s);
  qp.W_proj = Tensor::randn(d_prime, d, rng,
                            1.0 / std::sqrt(static_cast<double>(d_prime)));
  return qp;
}

RouterModulator RouterModulator::zeros(std::size_t experts, std::size_t d) {
  RouterModulator rm;
  rm.W_G = Tensor(experts, d);
  return rm;
}

RouterModulator RouterModulator::random(std::size_t experts, std::size_t d,
                                        RandomStream& rng, double scale) {
  RouterModulator rm;
  rm.W_G = Tensor::randn(experts, d, rng, scale);
  return rm;
}

EilmModulator EilmModulator::zeros(std::size_t experts, std::size_t out_dim,
                                   std::size_t d) {
  EilmModulator em;
  for (std::size_t i = 0; i < experts; ++i) {
    em.w.emplace_back(1, d);
    em.W.emplace_back(out_dim, d);
  }
  return em;
}

EilmModulator EilmModulator::random(std::size_t experts, std::size_t out_dim,
                                    std::size_t d, RandomStream& rng,
                                    double scale) {
  EilmModulator em;
  for (std::size_t i = 0; i < experts; ++i) {
    em.w.push_back(Tensor::randn(1, d, rng, scale));
    em.W.push_back(Tensor::randn(out_dim, d, rng, scale));
  }
  return em;
}

ContextTokens distill_context(const QueryPool& qp, const Tensor& H_raw,
                              Tensor* attn_out) {
  if (H_raw.rows == 0) {
    throw DataError("distill_context: empty context (no hidden states)");
  }
  if (H_raw.cols != qp.ctx_dim()) {
    throw DimensionError("distill_context: hidden states " +
                         H_raw.shape_str() + " vs projection expecting " +
                         std::to_string(qp.ctx_dim()) + " columns");
  }
  Tensor H = matmul(H_raw, qp.W_proj);  // M x d
  Tensor queries = matmul(qp.Q, qp.W_Q);
  Tensor keys = matmul(H, qp.W_K);
  Tensor scores =
      scale(matmul(queries, transpose(keys)),
            1.0 / std::sqrt(static_cast<double>(qp.dim())));
  Tensor attn = softmax_rows(scores);  // m x M
  if (attn_out) *attn_out = attn;
  ContextTokens ctx;
  ctx.Z = matmul(attn, matmul(H, qp.W_V));
  Tensor z(1, ctx.Z.cols);
  for (std::size_t i = 0; i < ctx.Z.rows; ++i) {
    for (std::size_t j = 0; j < ctx.Z.cols; ++j) {
      z.data[j] += ctx.Z.at(i, j);
    }
  }
  for (double& v : z.data) v /= static_cast<double>(ctx.Z.rows);
  ctx.z = z;
  return ctx;
}

Tensor router_modulate(const RouterModulator& rm, const Tensor& g,
                       const Tensor& z) {
  Tensor shift = matmul(z, transpose(rm.W_G));  // 1 x E
  if (g.cols != shift.cols || g.rows != 1) {
    throw DimensionError("router_modulate: scores " + g.shape_str() +
                         " vs shift " + shift.shape_str());
  }
  return add(g, shift);
}

Tensor eilm_modulate(const EilmModulator& em, std::size_t i,
                     const Tensor& f_out, const Tensor& z) {
  if (i >= em.w.size()) {
    throw ConfigError("eilm_modulate: expert index " + std::to_string(i) +
                      " out of " + std::to_string(em.w.size()));
  }
  double gamma = dot(em.w[i], z) + (em.residual_scale ? 1.0 : 0.0);
  Tensor beta = matmul(z, transpose(em.W[i]));  // 1 x out
  return add(scale(f_out, gamma), beta);
}

Tensor mome_layer_forward(const MoELayer& layer, const RouterModulator* rm,
                          const EilmModulator* em, const Tensor& x,
                          const ContextTokens& ctx,
                          std::vector<TokenRouting>* log) {
  std::size_t E = layer.num_experts();
  Tensor base_scores = route(layer.router, x);  // N x E
  std::size_t out_dim =
      layer.experts.empty() ? x.cols : layer.experts[0].W_down.rows;
  Tensor out(x.rows, out_dim);

  for (std::size_t n = 0; n < x.rows; ++n) {
    Tensor row(1, x.cols);
    std::copy(&x.data[n * x.cols], &x.data[(n + 1) * x.cols], row.data.begin());
    Tensor g_pre(1, E);
    std::copy(&base_scores.data[n * E], &base_scores.data[(n + 1) * E],
              g_pre.data.begin());
    Tensor g_post = rm ? router_modulate(*rm, g_pre, ctx.z) : g_pre;

    std::vector<std::size_t> selected = topk_indices(g_post, layer.K);
    for (std::size_t i : selected) {
      Tensor fi = glu_expert_forward(layer.experts[i], row);
      if (em) fi = eilm_modulate(*em, i, fi, ctx.z);
      double gi = g_post.data[i];
      for (std::size_t j = 0; j < out_dim; ++j) {
        out.at(n, j) += gi * fi.data[j];
      }
    }
    if (log) {
      TokenRouting tr;
      tr.scores_pre = g_pre.data;
      tr.scores_post = g_post.data;
      tr.selected_pre = topk_indices(g_pre, layer.K);
      tr.selected_post = selected;
      log->push_back(std::move(tr));
    }
  }
  return out;
}

ContextNodes distill_context_node(Graph& g, const QueryPool& qp, Var H_raw) {
  if (g.value(H_raw).rows == 0) {
    throw DataError("distill_context: empty context (no hidden states)");
  }
  Var H = g.matmul(H_raw, g.param(qp.W_proj));
  Var queries = g.matmul(g.param(qp.Q), g.param(qp.W_Q));
  Var keys = g.matmul(H, g.param(qp.W_K));
  Var scores = g.scale(g.matmul(queries, g.transpose(keys)),
                       1.0 / std::sqrt(static_cast<double>(qp.dim())));
  Var attn = g.softmax_rows(scores);
  ContextNodes out;
  out.Z = g.matmul(attn, g.matmul(H, g.param(qp.W_V)));
  out.z = g.mean_rows(out.Z);
  return out;
}

Var mome_node(Graph& g, const MoELayer& layer, const RouterModulator* rm,
              const EilmModulator* em, Var x, Var z,
              std::vector<TokenRouting>* log, std::vector<Var>* score_vars) {
  std::size_t N = g.value(x).rows;
  Var base = router_scores_node(g, layer.router, x);  // N x E
  Var shift{-1};
  if (rm) shift = g.matmul(z, g.transpose(g.param(rm->W_G)));  // 1 x E

  Var out{-1};
  for (std::size_t n = 0; n < N; ++n) {
    Var row = g.slice_rows(x, n, 1);
    Var g_row = g.slice_rows(base, n, 1);
    Var g_mod = rm ? g.add(g_row, shift) : g_row;
    if (score_vars) score_vars->push_back(g_mod);

    Tensor g_pre = g.value(g_row);
    Tensor g_post = g.value(g_mod);
    std::vector<std::size_t> selected = topk_indices(g_post, layer.K);

    Var token_out{-1};
    for (std::size_t i : selected) {
      Var fi = glu_expert_node(g, layer.experts[i], row);
      if (em) {
        Var wz = g.matmul(z, g.transpose(g.param(em->w[i])));  // 1 x 1
        Var gamma =
            em->residual_scale ? g.add(wz, g.leaf(Tensor::scalar(1.0))) : wz;
        Var beta = g.matmul(z, g.transpose(g.param(em->W[i])));
        fi = g.add(g.scalar_mul(gamma, fi), beta);
      }
      Var term = g.scalar_mul(g.pick(g_mod, 0, i), fi);
      token_out = token_out.id < 0 ? term : g.add(token_out, term);
    }
    out = out.id < 0 ? token_out : g.concat_rows(out, token_out);
    if (log) {
      TokenRouting tr;
      tr.scores_pre = g_pre.data;
      tr.scores_post = g_post.data;
      tr.selected_pre = topk_indices(g_pre, layer.K);
      tr.selected_post = selected;
      log->push_back(std::move(tr));
    }
  }
  return out;
}

}  // namespace mome
