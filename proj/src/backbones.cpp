#include "mome/backbones.hpp"

#include <cmath>

#include "mome/error.hpp"
#include "mome/rng.hpp"
#include "mome/tensor_ops.hpp"

namespace mome {

Tensor extract_patches(const Tensor& series, std::size_t patch_len,
                       std::size_t stride) {
  if (series.rows != 1) {
    throw DimensionError("extract_patches: expected a 1xT series, got " +
                         series.shape_str());
  }
  std::size_t T = series.cols;
  if (T < patch_len) {
    throw DataError("extract_patches: series length " + std::to_string(T) +
                    " shorter than patch length " + std::to_string(patch_len));
  }
  if (stride < 1) throw ConfigError("extract_patches: stride must be >= 1");
  std::size_t N = (T - patch_len) / stride + 1;
  Tensor out(N, patch_len);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < patch_len; ++j) {
      out.at(n, j) = series.data[n * stride + j];
    }
  }
  return out;
}

Tensor patchify(const Tensor& series, const PatchConfig& cfg) {
  if (cfg.embed.cols != cfg.patch_len) {
    throw DimensionError("patchify: embedding " + cfg.embed.shape_str() +
                         " does not accept patches of length " +
                         std::to_string(cfg.patch_len));
  }
  Tensor patches = extract_patches(series, cfg.patch_len, cfg.stride);
  return matmul(patches, transpose(cfg.embed));
}

void moving_average_decompose(const Tensor& x, std::size_t k, Tensor* seasonal,
                              Tensor* trend) {
  std::size_t T = x.rows;
  if (k % 2 == 0 || k < 1) {
    throw ConfigError("moving_average_decompose: kernel " + std::to_string(k) +
                      " must be odd");
  }
  if (k > T) {
    throw ConfigError("moving_average_decompose: kernel " + std::to_string(k) +
                      " exceeds series length " + std::to_string(T));
  }
  std::size_t half = k / 2;
  Tensor tr(T, x.cols);
  Tensor se(T, x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0;
      for (std::size_t o = 0; o < k; ++o) {
        // edge replication: clamp the window index into [0, T)
        long idx = static_cast<long>(t) + static_cast<long>(o) -
                   static_cast<long>(half);
        if (idx < 0) idx = 0;
        if (idx >= static_cast<long>(T)) idx = static_cast<long>(T) - 1;
        acc += x.at(static_cast<std::size_t>(idx), c);
      }
      tr.at(t, c) = acc / static_cast<double>(k);
      se.at(t, c) = x.at(t, c) - tr.at(t, c);
    }
  }
  if (seasonal) *seasonal = std::move(se);
  if (trend) *trend = std::move(tr);
}

Tensor Backbone::predict(const Tensor& x, const Tensor* H_raw,
                         const ForwardOptions& opt) {
  Graph g;
  Var out = build(g, x, H_raw, opt);
  return g.value(out);
}

namespace {

void check_common(const BackboneConfig& cfg) {
  if (cfg.layers < 1) throw ConfigError("backbone: layers must be >= 1");
  if (cfg.topk < 1 ||
      static_cast<std::size_t>(cfg.topk) > cfg.experts) {
    throw ConfigError("backbone: topk=" + std::to_string(cfg.topk) +
                      " outside [1, " + std::to_string(cfg.experts) + "]");
  }
  if (cfg.channels < 1) throw ConfigError("backbone: channels must be >= 1");
  if (cfg.lookback < 1) throw ConfigError("backbone: lookback must be >= 1");
  if (cfg.task == TaskKind::forecast && cfg.horizon < 1) {
    throw ConfigError("backbone: horizon must be >= 1");
  }
}

void check_univariate(const BackboneConfig& cfg, const char* kind) {
  if (cfg.channels != 1) {
    throw ConfigError(std::string(kind) + ": univariate only (channels=1), " +
                      "got " + std::to_string(cfg.channels));
  }
}

// Sinusoidal position rows, constant (not trained).
Tensor sinusoidal_positions(std::size_t n, std::size_t d) {
  Tensor pos(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double angle = static_cast<double>(i) /
                     std::pow(10000.0, 2.0 * static_cast<double>(j / 2) /
                                           static_cast<double>(d));
      pos.at(i, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pos;
}

Var apply_dropout(Graph& g, Var v, double p, RandomStream* rng) {
  if (!rng || p <= 0.0) return v;
  const Tensor& val = g.value(v);
  Tensor mask(val.rows, val.cols);
  double keep = 1.0 - p;
  for (double& m : mask.data) {
    m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  return g.mul(v, g.leaf(mask));
}

// x (T x C) -> per-channel last value, 1 x C.
Tensor last_row(const Tensor& x) {
  Tensor base(1, x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) base.data[c] = x.at(x.rows - 1, c);
  return base;
}

void append_params(std::vector<NamedParam>& out, const std::string& prefix,
                   MoELayer& layer) {
  out.push_back({prefix + ".router.W_g", &layer.router.W_g});
  for (std::size_t i = 0; i < layer.experts.size(); ++i) {
    std::string p = prefix + ".expert" + std::to_string(i);
    out.push_back({p + ".W_up", &layer.experts[i].W_up});
    out.push_back({p + ".W_gate", &layer.experts[i].W_gate});
    out.push_back({p + ".W_down", &layer.experts[i].W_down});
  }
}

void append_params(std::vector<NamedParam>& out, const std::string& prefix,
                   QueryPool& qp) {
  out.push_back({prefix + ".Q", &qp.Q});
  out.push_back({prefix + ".W_Q", &qp.W_Q});
  out.push_back({prefix + ".W_K", &qp.W_K});
  out.push_back({prefix + ".W_V", &qp.W_V});
  out.push_back({prefix + ".W_proj", &qp.W_proj});
}

void append_params(std::vector<NamedParam>& out, const std::string& prefix,
                   RouterModulator& rm, EilmModulator& em) {
  out.push_back({prefix + ".W_G", &rm.W_G});
  for (std::size_t i = 0; i < em.w.size(); ++i) {
    out.push_back({prefix + ".eilm" + std::to_string(i) + ".w", &em.w[i]});
    out.push_back({prefix + ".eilm" + std::to_string(i) + ".W", &em.W[i]});
  }
}

struct ModCtx {
  bool active = false;
  Var z{-1};
};

// ---------------------------------------------------------------------------
// MoME: patch tokens -> stacked modulated MoE blocks -> flatten -> head.

class MomeBackbone : public Backbone {
 public:
  MomeBackbone(BackboneConfig cfg, RandomStream& rng)
      : Backbone(std::move(cfg)) {
    check_common(cfg_);
    check_univariate(cfg_, "mome");
    if (cfg_.lookback < cfg_.patch_len) {
      throw ConfigError("mome: lookback " + std::to_string(cfg_.lookback) +
                        " shorter than patch length " +
                        std::to_string(cfg_.patch_len));
    }
    n_patches_ = (cfg_.lookback - cfg_.patch_len) / cfg_.stride + 1;
    embed_ = Tensor::randn(cfg_.d, cfg_.patch_len, rng,
                           1.0 / std::sqrt(static_cast<double>(cfg_.patch_len)));
    for (int l = 0; l < cfg_.layers; ++l) {
      layers_.push_back(MoELayer::init(cfg_.experts, cfg_.topk, cfg_.d,
                                       cfg_.expert_hidden, rng,
                                       cfg_.router_activation));
      if (cfg_.mod_init == ModInit::random) {
        rms_.push_back(RouterModulator::random(cfg_.experts, cfg_.d, rng,
                                               cfg_.mod_init_scale));
        ems_.push_back(EilmModulator::random(cfg_.experts, cfg_.d, cfg_.d, rng,
                                             cfg_.mod_init_scale));
      } else {
        rms_.push_back(RouterModulator::zeros(cfg_.experts, cfg_.d));
        ems_.push_back(EilmModulator::zeros(cfg_.experts, cfg_.d, cfg_.d));
      }
    }
    qp_ = QueryPool::init(cfg_.ctx_tokens, cfg_.d, cfg_.ctx_dim, rng);
    std::size_t flat = n_patches_ * cfg_.d;
    std::size_t out =
        cfg_.task == TaskKind::forecast ? cfg_.horizon : cfg_.n_classes;
    head_W_ = Tensor::randn(out, flat, rng,
                            1.0 / std::sqrt(static_cast<double>(flat)));
    head_b_ = Tensor(1, out);
  }

  Var build(Graph& g, const Tensor& x, const Tensor* H_raw,
            const ForwardOptions& opt) override {
    if (x.rows != cfg_.lookback || x.cols != 1) {
      throw DimensionError("mome: expected " + std::to_string(cfg_.lookback) +
                           "x1 input, got " + x.shape_str());
    }
    bool norm = cfg_.instance_norm && cfg_.task == TaskKind::forecast;
    double base = norm ? x.at(x.rows - 1, 0) : 0.0;
    Tensor series = transpose(x);  // 1 x T
    if (norm) {
      for (double& v : series.data) v -= base;
    }

    ModCtx mc;
    if (cfg_.modulation && H_raw) {
      ContextNodes cn = distill_context_node(g, qp_, g.leaf(*H_raw));
      mc.active = true;
      mc.z = cn.z;
    }

    Tensor patches = extract_patches(series, cfg_.patch_len, cfg_.stride);
    Var tokens = g.matmul(g.leaf(patches), g.transpose(g.param(embed_)));
    tokens = apply_dropout(g, tokens, cfg_.dropout, opt.dropout_rng);

    for (int l = 0; l < cfg_.layers; ++l) {
      Var block;
      if (cfg_.use_moe) {
        const RouterModulator* rm =
            (mc.active && cfg_.router_mod) ? &rms_[l] : nullptr;
        const EilmModulator* em = (mc.active && cfg_.eilm) ? &ems_[l] : nullptr;
        block = mome_node(g, layers_[l], rm, em, tokens, mc.z, opt.routing,
                          opt.score_vars);
      } else {
        block = glu_expert_node(g, layers_[l].experts[0], tokens);
      }
      tokens = g.add(tokens, apply_dropout(g, block, cfg_.dropout,
                                           opt.dropout_rng));
    }

    Var flat = g.reshape(tokens, 1, n_patches_ * cfg_.d);
    Var out = g.add(g.matmul(flat, g.transpose(g.param(head_W_))),
                    g.param(head_b_));
    if (norm) {
      out = g.add(out, g.leaf(Tensor(1, cfg_.horizon, base)));
    }
    return out;
  }

  std::vector<NamedParam> named_params() override {
    std::vector<NamedParam> out;
    out.push_back({"embed", &embed_});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      std::string p = "layer" + std::to_string(l);
      append_params(out, p, layers_[l]);
      if (cfg_.modulation) append_params(out, p, rms_[l], ems_[l]);
    }
    if (cfg_.modulation) append_params(out, "querypool", qp_);
    out.push_back({"head.W", &head_W_});
    out.push_back({"head.b", &head_b_});
    return out;
  }

 private:
  std::size_t n_patches_ = 0;
  Tensor embed_;
  std::vector<MoELayer> layers_;
  std::vector<RouterModulator> rms_;
  std::vector<EilmModulator> ems_;
  QueryPool qp_;
  Tensor head_W_;
  Tensor head_b_;
};

// ---------------------------------------------------------------------------
// MMLinear: one mixture of linear T->H experts over the raw sequence.

class MMLinearBackbone : public Backbone {
 public:
  MMLinearBackbone(BackboneConfig cfg, RandomStream& rng)
      : Backbone(std::move(cfg)) {
    check_common(cfg_);
    check_univariate(cfg_, "mmlinear");
    std::size_t T = cfg_.lookback;
    out_dim_ = cfg_.task == TaskKind::forecast ? cfg_.horizon : cfg_.n_classes;
    double s = 1.0 / std::sqrt(static_cast<double>(T));
    for (std::size_t i = 0; i < cfg_.experts; ++i) {
      experts_.push_back(Tensor::randn(out_dim_, T, rng, s));
    }
    router_embed_ = Tensor::randn(cfg_.d, T, rng, s);
    router_ = Router::init(cfg_.experts, cfg_.d, rng, cfg_.router_activation);
    if (cfg_.mod_init == ModInit::random) {
      rm_ = RouterModulator::random(cfg_.experts, cfg_.d, rng,
                                    cfg_.mod_init_scale);
      em_ = EilmModulator::random(cfg_.experts, out_dim_, cfg_.d, rng,
                                  cfg_.mod_init_scale);
    } else {
      rm_ = RouterModulator::zeros(cfg_.experts, cfg_.d);
      em_ = EilmModulator::zeros(cfg_.experts, out_dim_, cfg_.d);
    }
    qp_ = QueryPool::init(cfg_.ctx_tokens, cfg_.d, cfg_.ctx_dim, rng);
  }

  Var build(Graph& g, const Tensor& x, const Tensor* H_raw,
            const ForwardOptions& opt) override {
    if (x.rows != cfg_.lookback || x.cols != 1) {
      throw DimensionError("mmlinear: expected " +
                           std::to_string(cfg_.lookback) + "x1 input, got " +
                           x.shape_str());
    }
    bool norm = cfg_.instance_norm && cfg_.task == TaskKind::forecast;
    double base = norm ? x.at(x.rows - 1, 0) : 0.0;
    Tensor series = transpose(x);
    if (norm) {
      for (double& v : series.data) v -= base;
    }
    Var row = g.leaf(series);

    if (!cfg_.use_moe) {
      Var out = g.matmul(row, g.transpose(g.param(experts_[0])));
      if (norm) out = g.add(out, g.leaf(Tensor(1, out_dim_, base)));
      return out;
    }

    ModCtx mc;
    if (cfg_.modulation && H_raw) {
      ContextNodes cn = distill_context_node(g, qp_, g.leaf(*H_raw));
      mc.active = true;
      mc.z = cn.z;
    }

    Var x_r = g.matmul(row, g.transpose(g.param(router_embed_)));
    Var g_pre = router_scores_node(g, router_, x_r);  // 1 x E
    Var g_post = g_pre;
    if (mc.active && cfg_.router_mod) {
      g_post = g.add(g_pre, g.matmul(mc.z, g.transpose(g.param(rm_.W_G))));
    }

    if (opt.score_vars) opt.score_vars->push_back(g_post);
    std::vector<std::size_t> selected =
        topk_indices(g.value(g_post), cfg_.topk);
    Var out{-1};
    for (std::size_t i : selected) {
      Var fi = g.matmul(row, g.transpose(g.param(experts_[i])));
      if (mc.active && cfg_.eilm) {
        Var wz = g.matmul(mc.z, g.transpose(g.param(em_.w[i])));
        Var gamma = em_.residual_scale
                        ? g.add(wz, g.leaf(Tensor::scalar(1.0)))
                        : wz;
        Var beta = g.matmul(mc.z, g.transpose(g.param(em_.W[i])));
        fi = g.add(g.scalar_mul(gamma, fi), beta);
      }
      Var term = g.scalar_mul(g.pick(g_post, 0, i), fi);
      out = out.id < 0 ? term : g.add(out, term);
    }
    if (opt.routing) {
      TokenRouting tr;
      tr.scores_pre = g.value(g_pre).data;
      tr.scores_post = g.value(g_post).data;
      tr.selected_pre = topk_indices(g.value(g_pre), cfg_.topk);
      tr.selected_post = selected;
      opt.routing->push_back(std::move(tr));
    }
    if (norm) out = g.add(out, g.leaf(Tensor(1, out_dim_, base)));
    return out;
  }

  std::vector<NamedParam> named_params() override {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < experts_.size(); ++i) {
      out.push_back({"expert" + std::to_string(i) + ".W", &experts_[i]});
    }
    out.push_back({"router_embed", &router_embed_});
    out.push_back({"router.W_g", &router_.W_g});
    if (cfg_.modulation) {
      append_params(out, "mod", rm_, em_);
      append_params(out, "querypool", qp_);
    }
    return out;
  }

 private:
  std::size_t out_dim_ = 0;
  std::vector<Tensor> experts_;
  Tensor router_embed_;
  Router router_;
  RouterModulator rm_;
  EilmModulator em_;
  QueryPool qp_;
};

// ---------------------------------------------------------------------------
// Inverted transformer: channels as tokens, attention across channels,
// MoE (optionally modulated) in place of the FFN. Covers both the
// multi-modal `mitransformer` kind and the uni-modal `itransformer_moe`.

class InvertedTransformerBackbone : public Backbone {
 public:
  InvertedTransformerBackbone(BackboneConfig cfg, RandomStream& rng)
      : Backbone(std::move(cfg)) {
    check_common(cfg_);
    if (cfg_.d % cfg_.heads != 0) {
      throw ConfigError("transformer: d=" + std::to_string(cfg_.d) +
                        " not divisible by heads=" +
                        std::to_string(cfg_.heads));
    }
    multimodal_ = cfg_.kind == BackboneKind::mitransformer;
    std::size_t T = cfg_.lookback;
    tok_embed_ = Tensor::randn(cfg_.d, T, rng,
                               1.0 / std::sqrt(static_cast<double>(T)));
    pos_ = sinusoidal_positions(cfg_.channels, cfg_.d);
    double s = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
    for (int l = 0; l < cfg_.layers; ++l) {
      Layer ly;
      ly.W_q = Tensor::randn(cfg_.d, cfg_.d, rng, s);
      ly.W_k = Tensor::randn(cfg_.d, cfg_.d, rng, s);
      ly.W_v = Tensor::randn(cfg_.d, cfg_.d, rng, s);
      ly.W_o = Tensor::randn(cfg_.d, cfg_.d, rng, s);
      ly.moe = MoELayer::init(cfg_.experts, cfg_.topk, cfg_.d,
                              cfg_.expert_hidden, rng, cfg_.router_activation);
      if (multimodal_ && cfg_.mod_init == ModInit::random) {
        ly.rm = RouterModulator::random(cfg_.experts, cfg_.d, rng,
                                        cfg_.mod_init_scale);
        ly.em = EilmModulator::random(cfg_.experts, cfg_.d, cfg_.d, rng,
                                      cfg_.mod_init_scale);
      } else {
        ly.rm = RouterModulator::zeros(cfg_.experts, cfg_.d);
        ly.em = EilmModulator::zeros(cfg_.experts, cfg_.d, cfg_.d);
      }
      layers_.push_back(std::move(ly));
    }
    if (multimodal_) {
      qp_ = QueryPool::init(cfg_.ctx_tokens, cfg_.d, cfg_.ctx_dim, rng);
    }
    if (cfg_.task == TaskKind::forecast) {
      head_W_ = Tensor::randn(cfg_.horizon, cfg_.d, rng, s);
      head_b_ = Tensor(1, cfg_.horizon);
    } else {
      std::size_t flat = cfg_.channels * cfg_.d;
      head_W_ = Tensor::randn(cfg_.n_classes, flat, rng,
                              1.0 / std::sqrt(static_cast<double>(flat)));
      head_b_ = Tensor(1, cfg_.n_classes);
    }
  }

  Var build(Graph& g, const Tensor& x, const Tensor* H_raw,
            const ForwardOptions& opt) override {
    if (x.rows != cfg_.lookback || x.cols != cfg_.channels) {
      throw DimensionError("transformer: expected " +
                           std::to_string(cfg_.lookback) + "x" +
                           std::to_string(cfg_.channels) + " input, got " +
                           x.shape_str());
    }
    bool norm = cfg_.instance_norm && cfg_.task == TaskKind::forecast;
    Tensor base = last_row(x);
    Tensor xn = x;
    if (norm) {
      for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t c = 0; c < x.cols; ++c) {
          xn.at(t, c) -= base.data[c];
        }
      }
    }

    ModCtx mc;
    if (multimodal_ && cfg_.modulation && H_raw) {
      ContextNodes cn = distill_context_node(g, qp_, g.leaf(*H_raw));
      mc.active = true;
      mc.z = cn.z;
    }

    // channels as tokens
    Var tokens = g.matmul(g.leaf(transpose(xn)), g.transpose(g.param(tok_embed_)));
    tokens = g.add(tokens, g.leaf(pos_));
    tokens = apply_dropout(g, tokens, cfg_.dropout, opt.dropout_rng);

    std::size_t dh = cfg_.d / cfg_.heads;
    for (Layer& ly : layers_) {
      Var a_in = g.layer_norm_rows(tokens);
      Var Q = g.matmul(a_in, g.param(ly.W_q));
      Var K = g.matmul(a_in, g.param(ly.W_k));
      Var V = g.matmul(a_in, g.param(ly.W_v));
      Var heads_out{-1};
      for (std::size_t h = 0; h < cfg_.heads; ++h) {
        Var Qh = g.slice_cols(Q, h * dh, dh);
        Var Kh = g.slice_cols(K, h * dh, dh);
        Var Vh = g.slice_cols(V, h * dh, dh);
        Var scores = g.scale(g.matmul(Qh, g.transpose(Kh)),
                             1.0 / std::sqrt(static_cast<double>(dh)));
        Var attn = g.softmax_rows(scores);
        Var oh = g.matmul(attn, Vh);
        heads_out = heads_out.id < 0 ? oh : g.concat_cols(heads_out, oh);
      }
      Var proj = g.matmul(heads_out, g.param(ly.W_o));
      tokens = g.add(tokens, apply_dropout(g, proj, cfg_.dropout,
                                           opt.dropout_rng));

      Var f_in = g.layer_norm_rows(tokens);
      Var block;
      if (cfg_.use_moe) {
        const RouterModulator* rm =
            (mc.active && cfg_.router_mod) ? &ly.rm : nullptr;
        const EilmModulator* em = (mc.active && cfg_.eilm) ? &ly.em : nullptr;
        block = mome_node(g, ly.moe, rm, em, f_in, mc.z, opt.routing,
                          opt.score_vars);
      } else {
        block = glu_expert_node(g, ly.moe.experts[0], f_in);
      }
      tokens = g.add(tokens, apply_dropout(g, block, cfg_.dropout,
                                           opt.dropout_rng));
    }

    if (cfg_.task == TaskKind::trend) {
      Var flat = g.reshape(tokens, 1, cfg_.channels * cfg_.d);
      return g.add(g.matmul(flat, g.transpose(g.param(head_W_))),
                   g.param(head_b_));
    }
    // per-channel head: C x d -> C x H, transposed to H x C
    Var per_channel = g.add(g.matmul(tokens, g.transpose(g.param(head_W_))),
                            g.broadcast_row(g.param(head_b_), cfg_.channels));
    Var out = g.transpose(per_channel);
    if (norm) {
      out = g.add(out, g.matmul(g.leaf(Tensor(cfg_.horizon, 1, 1.0)),
                                g.leaf(base)));
    }
    return out;
  }

  std::vector<NamedParam> named_params() override {
    std::vector<NamedParam> out;
    out.push_back({"tok_embed", &tok_embed_});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      std::string p = "layer" + std::to_string(l);
      out.push_back({p + ".attn.W_q", &layers_[l].W_q});
      out.push_back({p + ".attn.W_k", &layers_[l].W_k});
      out.push_back({p + ".attn.W_v", &layers_[l].W_v});
      out.push_back({p + ".attn.W_o", &layers_[l].W_o});
      append_params(out, p + ".ffn", layers_[l].moe);
      if (multimodal_ && cfg_.modulation) {
        append_params(out, p, layers_[l].rm, layers_[l].em);
      }
    }
    if (multimodal_ && cfg_.modulation) append_params(out, "querypool", qp_);
    out.push_back({"head.W", &head_W_});
    out.push_back({"head.b", &head_b_});
    return out;
  }

 private:
  struct Layer {
    Tensor W_q, W_k, W_v, W_o;
    MoELayer moe;
    RouterModulator rm;
    EilmModulator em;
  };

  bool multimodal_ = false;
  Tensor tok_embed_;
  Tensor pos_;
  std::vector<Layer> layers_;
  QueryPool qp_;
  Tensor head_W_;
  Tensor head_b_;
};

// ---------------------------------------------------------------------------
// DLinear-MoE: seasonal/trend decomposition, one gated mixture of linear
// experts per branch, channels treated as tokens (shared weights).

class DLinearMoeBackbone : public Backbone {
 public:
  DLinearMoeBackbone(BackboneConfig cfg, RandomStream& rng)
      : Backbone(std::move(cfg)) {
    check_common(cfg_);
    if (cfg_.task != TaskKind::forecast) {
      throw ConfigError("dlinear_moe: forecast task only");
    }
    if (cfg_.ma_kernel % 2 == 0 || cfg_.ma_kernel > cfg_.lookback) {
      throw ConfigError("dlinear_moe: ma_kernel " +
                        std::to_string(cfg_.ma_kernel) +
                        " must be odd and at most lookback " +
                        std::to_string(cfg_.lookback));
    }
    std::size_t T = cfg_.lookback;
    double s = 1.0 / std::sqrt(static_cast<double>(T));
    for (int b = 0; b < 2; ++b) {
      Branch& br = branch_[b];
      br.gate = Router::init(cfg_.experts, T, rng, cfg_.router_activation);
      for (std::size_t i = 0; i < cfg_.experts; ++i) {
        br.experts.push_back(Tensor::randn(cfg_.horizon, T, rng, s));
      }
    }
  }

  Var build(Graph& g, const Tensor& x, const Tensor*,
            const ForwardOptions& opt) override {
    if (x.rows != cfg_.lookback || x.cols != cfg_.channels) {
      throw DimensionError("dlinear_moe: expected " +
                           std::to_string(cfg_.lookback) + "x" +
                           std::to_string(cfg_.channels) + " input, got " +
                           x.shape_str());
    }
    bool norm = cfg_.instance_norm;
    Tensor base = last_row(x);
    Tensor xn = x;
    if (norm) {
      for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t c = 0; c < x.cols; ++c) {
          xn.at(t, c) -= base.data[c];
        }
      }
    }
    Tensor seasonal, trend;
    moving_average_decompose(xn, cfg_.ma_kernel, &seasonal, &trend);

    Var rows{-1};  // C x H, one row per channel
    for (std::size_t c = 0; c < cfg_.channels; ++c) {
      Var s_out = branch_forward(g, branch_[0], channel_row(seasonal, c), opt);
      Var t_out = branch_forward(g, branch_[1], channel_row(trend, c), opt);
      Var ch = g.add(s_out, t_out);
      rows = rows.id < 0 ? ch : g.concat_rows(rows, ch);
    }
    Var out = g.transpose(rows);  // H x C
    if (norm) {
      out = g.add(out, g.matmul(g.leaf(Tensor(cfg_.horizon, 1, 1.0)),
                                g.leaf(base)));
    }
    return out;
  }

  std::vector<NamedParam> named_params() override {
    std::vector<NamedParam> out;
    const char* names[2] = {"seasonal", "trend"};
    for (int b = 0; b < 2; ++b) {
      std::string p = names[b];
      out.push_back({p + ".gate.W_g", &branch_[b].gate.W_g});
      for (std::size_t i = 0; i < branch_[b].experts.size(); ++i) {
        out.push_back({p + ".expert" + std::to_string(i) + ".W",
                       &branch_[b].experts[i]});
      }
    }
    return out;
  }

 private:
  struct Branch {
    Router gate;
    std::vector<Tensor> experts;  // E of H x T
  };

  static Tensor channel_row(const Tensor& m, std::size_t c) {
    Tensor row(1, m.rows);
    for (std::size_t t = 0; t < m.rows; ++t) row.data[t] = m.at(t, c);
    return row;
  }

  Var branch_forward(Graph& g, Branch& br, const Tensor& series,
                     const ForwardOptions& opt) {
    Var row = g.leaf(series);
    if (!cfg_.use_moe) {
      return g.matmul(row, g.transpose(g.param(br.experts[0])));
    }
    Var scores = router_scores_node(g, br.gate, row);  // 1 x E
    if (opt.score_vars) opt.score_vars->push_back(scores);
    std::vector<std::size_t> selected =
        topk_indices(g.value(scores), cfg_.topk);
    Var out{-1};
    for (std::size_t i : selected) {
      Var fi = g.matmul(row, g.transpose(g.param(br.experts[i])));
      Var term = g.scalar_mul(g.pick(scores, 0, i), fi);
      out = out.id < 0 ? term : g.add(out, term);
    }
    if (opt.routing) {
      TokenRouting tr;
      tr.scores_pre = g.value(scores).data;
      tr.scores_post = tr.scores_pre;
      tr.selected_pre = selected;
      tr.selected_post = selected;
      opt.routing->push_back(std::move(tr));
    }
    return out;
  }

  Branch branch_[2];
};

// ---------------------------------------------------------------------------
// TSMixer-MoE: alternating time-mixing (MoE over channels-as-tokens) and
// dense channel-mixing MLPs, then a per-channel linear head.

class TSMixerMoeBackbone : public Backbone {
 public:
  TSMixerMoeBackbone(BackboneConfig cfg, RandomStream& rng)
      : Backbone(std::move(cfg)) {
    check_common(cfg_);
    if (cfg_.task != TaskKind::forecast) {
      throw ConfigError("tsmixer_moe: forecast task only");
    }
    std::size_t T = cfg_.lookback;
    std::size_t C = cfg_.channels;
    double sT = 1.0 / std::sqrt(static_cast<double>(T));
    double sC = 1.0 / std::sqrt(static_cast<double>(C));
    for (int l = 0; l < cfg_.layers; ++l) {
      Layer ly;
      ly.time_moe = MoELayer::init(cfg_.experts, cfg_.topk, T,
                                   cfg_.expert_hidden, rng,
                                   cfg_.router_activation);
      ly.ch_W1 = Tensor::randn(cfg_.d, C, rng, sC);
      ly.ch_b1 = Tensor(1, cfg_.d);
      ly.ch_W2 = Tensor::randn(C, cfg_.d, rng,
                               1.0 / std::sqrt(static_cast<double>(cfg_.d)));
      ly.ch_b2 = Tensor(1, C);
      layers_.push_back(std::move(ly));
    }
    head_W_ = Tensor::randn(cfg_.horizon, T, rng, sT);
    head_b_ = Tensor(1, cfg_.horizon);
  }

  Var build(Graph& g, const Tensor& x, const Tensor*,
            const ForwardOptions& opt) override {
    if (x.rows != cfg_.lookback || x.cols != cfg_.channels) {
      throw DimensionError("tsmixer_moe: expected " +
                           std::to_string(cfg_.lookback) + "x" +
                           std::to_string(cfg_.channels) + " input, got " +
                           x.shape_str());
    }
    bool norm = cfg_.instance_norm;
    Tensor base = last_row(x);
    Tensor xn = x;
    if (norm) {
      for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t c = 0; c < x.cols; ++c) {
          xn.at(t, c) -= base.data[c];
        }
      }
    }

    Var tokens = g.leaf(transpose(xn));  // C x T, channels as tokens
    for (Layer& ly : layers_) {
      Var t_in = g.layer_norm_rows(tokens);
      Var mixed;
      if (cfg_.use_moe) {
        mixed = moe_node(g, ly.time_moe, t_in, false, opt.routing,
                         opt.score_vars);
      } else {
        mixed = glu_expert_node(g, ly.time_moe.experts[0], t_in);
      }
      tokens = g.add(tokens, apply_dropout(g, mixed, cfg_.dropout,
                                           opt.dropout_rng));

      Var c_in = g.layer_norm_rows(g.transpose(tokens));  // T x C
      Var h = g.relu(g.add(g.matmul(c_in, g.transpose(g.param(ly.ch_W1))),
                           g.broadcast_row(g.param(ly.ch_b1), cfg_.lookback)));
      Var c_out = g.add(g.matmul(h, g.transpose(g.param(ly.ch_W2))),
                        g.broadcast_row(g.param(ly.ch_b2), cfg_.lookback));
      tokens = g.add(tokens, apply_dropout(g, g.transpose(c_out), cfg_.dropout,
                                           opt.dropout_rng));
    }

    Var per_channel =
        g.add(g.matmul(tokens, g.transpose(g.param(head_W_))),
              g.broadcast_row(g.param(head_b_), cfg_.channels));  // C x H
    Var out = g.transpose(per_channel);
    if (norm) {
      out = g.add(out, g.matmul(g.leaf(Tensor(cfg_.horizon, 1, 1.0)),
                                g.leaf(base)));
    }
    return out;
  }

  std::vector<NamedParam> named_params() override {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      std::string p = "layer" + std::to_string(l);
      append_params(out, p + ".time", layers_[l].time_moe);
      out.push_back({p + ".channel.W1", &layers_[l].ch_W1});
      out.push_back({p + ".channel.b1", &layers_[l].ch_b1});
      out.push_back({p + ".channel.W2", &layers_[l].ch_W2});
      out.push_back({p + ".channel.b2", &layers_[l].ch_b2});
    }
    out.push_back({"head.W", &head_W_});
    out.push_back({"head.b", &head_b_});
    return out;
  }

 private:
  struct Layer {
    MoELayer time_moe;
    Tensor ch_W1, ch_b1, ch_W2, ch_b2;
  };

  std::vector<Layer> layers_;
  Tensor head_W_;
  Tensor head_b_;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& cfg,
                                        std::uint64_t seed) {
  std::uint64_t state = seed;
  RandomStream rng(splitmix64(state));
  switch (cfg.kind) {
    case BackboneKind::mome:
      return std::make_unique<MomeBackbone>(cfg, rng);
    case BackboneKind::mmlinear:
      return std::make_unique<MMLinearBackbone>(cfg, rng);
    case BackboneKind::mitransformer:
    case BackboneKind::itransformer_moe:
      return std::make_unique<InvertedTransformerBackbone>(cfg, rng);
    case BackboneKind::dlinear_moe:
      return std::make_unique<DLinearMoeBackbone>(cfg, rng);
    case BackboneKind::tsmixer_moe:
      return std::make_unique<TSMixerMoeBackbone>(cfg, rng);
  }
  throw ConfigError("unknown backbone kind");
}

const char* backbone_kind_name(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::mome: return "mome";
    case BackboneKind::mmlinear: return "mmlinear";
    case BackboneKind::mitransformer: return "mitransformer";
    case BackboneKind::dlinear_moe: return "dlinear_moe";
    case BackboneKind::tsmixer_moe: return "tsmixer_moe";
    case BackboneKind::itransformer_moe: return "itransformer_moe";
  }
  return "unknown";
}

BackboneKind backbone_kind_from(const std::string& name) {
  if (name == "mome") return BackboneKind::mome;
  if (name == "mmlinear") return BackboneKind::mmlinear;
  if (name == "mitransformer") return BackboneKind::mitransformer;
  if (name == "dlinear_moe") return BackboneKind::dlinear_moe;
  if (name == "tsmixer_moe") return BackboneKind::tsmixer_moe;
  if (name == "itransformer_moe") return BackboneKind::itransformer_moe;
  throw ConfigError("unknown backbone kind: " + name);
}

}  // namespace mome
