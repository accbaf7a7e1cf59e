#include <cmath>

#include "doctest.h"
#include "mome/error.hpp"
#include "mome/grad_check.hpp"
#include "mome/modulation.hpp"
#include "mome/rng.hpp"
#include "mome/tensor_ops.hpp"

using namespace mome;

TEST_CASE("query pool rows start orthonormal") {
  RandomStream rng(5);
  QueryPool qp = QueryPool::init(3, 8, 16, rng);
  Tensor gram = matmul(qp.Q, transpose(qp.Q));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double expect = i == j ? 1.0 : 0.0;
      CHECK(std::fabs(gram.at(i, j) - expect) <= 1e-9);
    }
  }
  CHECK_THROWS_AS(QueryPool::init(9, 8, 16, rng), ConfigError);
  CHECK_THROWS_AS(QueryPool::init(0, 8, 16, rng), ConfigError);
}

TEST_CASE("distill_context rejects empty context") {
  RandomStream rng(6);
  QueryPool qp = QueryPool::init(2, 4, 8, rng);
  Tensor empty(0, 8);
  CHECK_THROWS_AS(distill_context(qp, empty), DataError);
}

TEST_CASE("distill_context with a single hidden state") {
  RandomStream rng(7);
  QueryPool qp = QueryPool::init(3, 4, 8, rng);
  Tensor H_raw = Tensor::randn(1, 8, rng);
  Tensor attn;
  ContextTokens ctx = distill_context(qp, H_raw, &attn);
  // softmax over one key: every query attends with weight exactly 1
  REQUIRE(attn.rows == 3);
  REQUIRE(attn.cols == 1);
  for (double a : attn.data) CHECK(a == 1.0);
  // all Z rows equal the single value row, independent of the query
  Tensor hv = matmul(matmul(H_raw, qp.W_proj), qp.W_V);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(ctx.Z.at(i, j) == doctest::Approx(hv.at(0, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("distill_context shapes, stochastic attention, zero context") {
  RandomStream rng(8);
  QueryPool qp = QueryPool::init(3, 6, 10, rng);
  Tensor H_raw = Tensor::randn(5, 10, rng);
  Tensor attn;
  ContextTokens ctx = distill_context(qp, H_raw, &attn);
  CHECK(ctx.Z.rows == 3);
  CHECK(ctx.Z.cols == 6);
  CHECK(ctx.z.rows == 1);
  CHECK(ctx.z.cols == 6);
  for (std::size_t i = 0; i < attn.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < attn.cols; ++j) sum += attn.at(i, j);
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
  // pooled z is the column mean of Z
  for (std::size_t j = 0; j < 6; ++j) {
    double mean = (ctx.Z.at(0, j) + ctx.Z.at(1, j) + ctx.Z.at(2, j)) / 3.0;
    CHECK(ctx.z.data[j] == doctest::Approx(mean).epsilon(1e-12));
  }

  ContextTokens zero = distill_context(qp, Tensor(4, 10));
  CHECK(norm(zero.Z) == 0.0);
  CHECK(norm(zero.z) == 0.0);
}

TEST_CASE("router_modulate shift arithmetic and selection flip") {
  RouterModulator zero = RouterModulator::zeros(2, 3);
  Tensor g = Tensor::row({0.6, 0.4});
  Tensor z = Tensor::row({1.0, -2.0, 0.5});
  Tensor same = router_modulate(zero, g, z);
  CHECK(same.data[0] == 0.6);
  CHECK(same.data[1] == 0.4);

  RouterModulator rm;
  rm.W_G = Tensor::from_rows(2, 1, {-0.3, 0.3});
  Tensor z1 = Tensor::row({1.0});
  Tensor shifted = router_modulate(rm, g, z1);
  CHECK(shifted.data[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(shifted.data[1] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(topk_indices(g, 1)[0] == 0);
  CHECK(topk_indices(shifted, 1)[0] == 1);

  Tensor zz = Tensor::row({0.0});
  Tensor unshifted = router_modulate(rm, g, zz);
  CHECK(unshifted.data[0] == 0.6);
  CHECK(unshifted.data[1] == 0.4);
}

TEST_CASE("eilm_modulate scale and bias forms") {
  RandomStream rng(9);
  Tensor f = Tensor::randn(1, 4, rng);
  Tensor z = Tensor::randn(1, 3, rng);

  EilmModulator id = EilmModulator::zeros(2, 4, 3);
  Tensor out = eilm_modulate(id, 0, f, z);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.data[i] == f.data[i]);

  EilmModulator bias_only = EilmModulator::random(2, 4, 3, rng, 0.5);
  bias_only.residual_scale = false;
  for (Tensor& w : bias_only.w) w = Tensor(1, 3);
  Tensor b = eilm_modulate(bias_only, 1, f, z);
  Tensor expected = matmul(z, transpose(bias_only.W[1]));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(b.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
  }
  // bias ignores the expert output entirely
  Tensor b2 = eilm_modulate(bias_only, 1, scale(f, -7.0), z);
  for (std::size_t i = 0; i < 4; ++i) CHECK(b2.data[i] == b.data[i]);

  EilmModulator dbl = EilmModulator::zeros(1, 4, 1);
  dbl.residual_scale = false;
  dbl.w[0] = Tensor::row({2.0});
  Tensor doubled = eilm_modulate(dbl, 0, f, Tensor::row({1.0}));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(doubled.data[i] == doctest::Approx(2.0 * f.data[i]));
  }

  CHECK_THROWS_AS(eilm_modulate(id, 5, f, z), ConfigError);
}

TEST_CASE("zero-initialized modulation reduces to the plain mixture") {
  RandomStream rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    MoELayer layer = MoELayer::init(4, 2, 6, 8, rng);
    RouterModulator rm = RouterModulator::zeros(4, 6);
    EilmModulator em = EilmModulator::zeros(4, 6, 6);
    QueryPool qp = QueryPool::init(2, 6, 12, rng);
    ContextTokens ctx = distill_context(qp, Tensor::randn(3, 12, rng));
    Tensor x = Tensor::randn(2, 6, rng);

    Tensor plain = moe_forward(layer, x);
    Tensor modded = mome_layer_forward(layer, &rm, &em, x, ctx);
    REQUIRE(plain.same_shape(modded));
    for (std::size_t i = 0; i < plain.size(); ++i) {
      CHECK(std::fabs(plain.data[i] - modded.data[i]) <= 1e-12);
    }
  }
}

TEST_CASE("modulated forward follows the flipped selection") {
  RandomStream rng(11);
  MoELayer layer = MoELayer::init(2, 1, 3, 4, rng);
  layer.router.activation = RouterActivation::identity;
  layer.router.W_g = Tensor::from_rows(2, 3, {0.6, 0, 0, 0.4, 0, 0});
  Tensor x = Tensor::row({1.0, 0.0, 0.0});  // g = [0.6, 0.4]

  RouterModulator rm;
  rm.W_G = Tensor::from_rows(2, 1, {-0.3, 0.3});
  ContextTokens ctx;
  ctx.Z = Tensor::row({1.0});
  ctx.z = Tensor::row({1.0});

  std::vector<TokenRouting> log;
  Tensor out = mome_layer_forward(layer, &rm, nullptr, x, ctx, &log);
  REQUIRE(log.size() == 1);
  CHECK(log[0].selected_pre[0] == 0);
  CHECK(log[0].selected_post[0] == 1);

  Tensor f2 = glu_expert_forward(layer.experts[1], x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(0.7 * f2.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("modulated forward equals the term-by-term construction") {
  RandomStream rng(12);
  MoELayer layer = MoELayer::init(4, 2, 5, 6, rng);
  RouterModulator rm = RouterModulator::random(4, 5, rng, 0.3);
  EilmModulator em = EilmModulator::random(4, 5, 5, rng, 0.3);
  QueryPool qp = QueryPool::init(3, 5, 8, rng);
  ContextTokens ctx = distill_context(qp, Tensor::randn(4, 8, rng));
  Tensor x = Tensor::randn(1, 5, rng);

  // independent construction of the mixture
  Tensor g_pre = route(layer.router, x);
  Tensor g_post = add(g_pre, matmul(ctx.z, transpose(rm.W_G)));
  std::vector<std::size_t> sel = topk_indices(g_post, 2);
  Tensor expected(1, 5);
  for (std::size_t i : sel) {
    Tensor fi = glu_expert_forward(layer.experts[i], x);
    double gamma = 1.0 + dot(em.w[i], ctx.z);
    Tensor beta = matmul(ctx.z, transpose(em.W[i]));
    Tensor fmod = add(scale(fi, gamma), beta);
    expected = add(expected, scale(fmod, g_post.data[i]));
  }

  Tensor out = mome_layer_forward(layer, &rm, &em, x, ctx);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-11));
  }
}

TEST_CASE("graph path matches value path for the modulated layer") {
  RandomStream rng(13);
  MoELayer layer = MoELayer::init(3, 2, 4, 5, rng);
  RouterModulator rm = RouterModulator::random(3, 4, rng, 0.2);
  EilmModulator em = EilmModulator::random(3, 4, 4, rng, 0.2);
  QueryPool qp = QueryPool::init(2, 4, 6, rng);
  Tensor H_raw = Tensor::randn(3, 6, rng);
  Tensor x = Tensor::randn(2, 4, rng);

  ContextTokens ctx = distill_context(qp, H_raw);
  Tensor value_path = mome_layer_forward(layer, &rm, &em, x, ctx);

  Graph g;
  ContextNodes cn = distill_context_node(g, qp, g.leaf(H_raw));
  Var out = mome_node(g, layer, &rm, &em, g.leaf(x), cn.z);
  REQUIRE(g.value(out).same_shape(value_path));
  for (std::size_t i = 0; i < value_path.size(); ++i) {
    CHECK(g.value(out).data[i] ==
          doctest::Approx(value_path.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradients flow through every modulation parameter") {
  RandomStream rng(14);
  MoELayer layer = MoELayer::init(3, 2, 4, 5, rng);
  RouterModulator rm = RouterModulator::random(3, 4, rng, 0.2);
  EilmModulator em = EilmModulator::random(3, 4, 4, rng, 0.2);
  QueryPool qp = QueryPool::init(2, 4, 6, rng);
  Tensor H_raw = Tensor::randn(3, 6, rng);
  Tensor x = Tensor::randn(2, 4, rng);
  Tensor proj = Tensor::randn(2, 4, rng);

  auto f = [&](Graph& g) {
    ContextNodes cn = distill_context_node(g, qp, g.leaf(H_raw));
    Var out = mome_node(g, layer, &rm, &em, g.leaf(x), cn.z);
    return g.sum_all(g.mul(out, g.leaf(proj)));
  };

  std::vector<Tensor*> params = {&qp.Q,      &qp.W_Q, &qp.W_K,
                                 &qp.W_V,    &qp.W_proj, &rm.W_G,
                                 &layer.router.W_g};
  for (std::size_t i = 0; i < 3; ++i) {
    params.push_back(&em.w[i]);
    params.push_back(&em.W[i]);
    params.push_back(&layer.experts[i].W_up);
    params.push_back(&layer.experts[i].W_gate);
    params.push_back(&layer.experts[i].W_down);
  }
  CHECK(grad_check(f, params) <= 1e-4);

  // every modulation parameter receives a nonzero gradient
  Graph g;
  Var loss = f(g);
  g.backward(loss);
  for (Tensor* p :
       std::vector<Tensor*>{&qp.Q, &qp.W_Q, &qp.W_proj, &rm.W_G, &em.w[0]}) {
    CHECK(norm(g.grad_of(*p)) > 0.0);
  }
}
