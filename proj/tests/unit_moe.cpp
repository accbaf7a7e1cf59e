#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mome/error.hpp"
#include "mome/grad_check.hpp"
#include "mome/moe.hpp"
#include "mome/rng.hpp"
#include "mome/spectral.hpp"
#include "mome/tensor_ops.hpp"
#include "mome/verification.hpp"

using namespace mome;

TEST_CASE("glu expert forward scalar cases") {
  GluExpert e;
  e.W_up = Tensor::scalar(1.0);
  e.W_gate = Tensor::scalar(1.0);
  e.W_down = Tensor::scalar(1.0);

  Tensor zero = Tensor::scalar(0.0);
  CHECK(glu_expert_forward(e, zero).item() == 0.0);

  Tensor two = Tensor::scalar(2.0);
  double silu2 = 2.0 / (1.0 + std::exp(-2.0));
  CHECK(glu_expert_forward(e, two).item() ==
        doctest::Approx(silu2 * 2.0).epsilon(1e-12));
  CHECK(glu_expert_forward(e, two).item() == doctest::Approx(3.5231883).epsilon(1e-6));

  GluExpert scaled = e;
  scaled.W_down = Tensor::scalar(-2.5);
  CHECK(glu_expert_forward(scaled, two).item() ==
        doctest::Approx(-2.5 * silu2 * 2.0));
}

TEST_CASE("routing activations") {
  Router r;
  r.W_g = Tensor(4, 3);  // zero weights
  r.activation = RouterActivation::softmax;
  Tensor g = route(r, Tensor::row({1.0, -2.0, 0.5}));
  for (double v : g.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  Router ident;
  ident.W_g = Tensor::identity(3);
  ident.activation = RouterActivation::identity;
  Tensor x = Tensor::row({0.3, -1.2, 4.0});
  Tensor gx = route(ident, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(gx.data[i] == x.data[i]);

  RandomStream rng(3);
  Router rnd = Router::init(3, 5, rng);
  Tensor gr = route(rnd, Tensor::randn(1, 5, rng));
  double sum = gr.data[0] + gr.data[1] + gr.data[2];
  CHECK(std::fabs(sum - 1.0) <= 1e-12);
}

TEST_CASE("topk mask selection and ties") {
  Tensor g = Tensor::row({0.1, 0.5, 0.4});
  Tensor m = topk_mask(g, 1);
  CHECK(m.data[0] == 0.0);
  CHECK(m.data[1] == 1.0);
  CHECK(m.data[2] == 0.0);

  Tensor all = topk_mask(g, 3);
  CHECK(sum_all(all) == 3.0);

  Tensor tie = Tensor::row({0.3, 0.3, 0.2});
  Tensor mt = topk_mask(tie, 1);
  CHECK(mt.data[0] == 1.0);
  CHECK(mt.data[1] == 0.0);

  CHECK_THROWS_AS(topk_mask(g, 0), ConfigError);
  CHECK_THROWS_AS(topk_mask(g, 4), ConfigError);

  // cardinality is always K
  RandomStream rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor scores = Tensor::randn(1, 6, rng);
    for (int k = 1; k <= 6; ++k) {
      CHECK(sum_all(topk_mask(scores, k)) == static_cast<double>(k));
    }
  }
}

TEST_CASE("moe forward: sparse equals dense at K=E, bitwise") {
  RandomStream rng(21);
  MoELayer layer = MoELayer::init(4, 4, 6, 8, rng);
  Tensor x = Tensor::randn(3, 6, rng);
  Tensor sparse = moe_forward(layer, x, false);
  Tensor dense = moe_forward(layer, x, true);
  REQUIRE(sparse.same_shape(dense));
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    CHECK(sparse.data[i] == dense.data[i]);
  }
}

TEST_CASE("moe forward: constructed one-hot routing picks a single expert") {
  RandomStream rng(22);
  MoELayer layer = MoELayer::init(2, 1, 3, 4, rng);
  layer.router.activation = RouterActivation::identity;
  // score = x . w_g_row; make expert 0 win with weight exactly 1
  layer.router.W_g = Tensor::from_rows(2, 3, {1, 0, 0, 0, 0, 0});
  Tensor x = Tensor::row({1.0, -0.7, 2.0});  // g = [1, 0]
  Tensor out = moe_forward(layer, x);
  Tensor expected = glu_expert_forward(layer.experts[0], x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("moe forward matches brute-force sum over selected experts") {
  RandomStream rng(23);
  MoELayer layer = MoELayer::init(4, 2, 5, 7, rng);
  Tensor x = Tensor::randn(1, 5, rng);

  // independent path: score, sort, evaluate the two winners directly
  Tensor g = route(layer.router, x);
  std::vector<std::size_t> order(4);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return g.data[a] > g.data[b];
                   });
  Tensor expected(1, 5);
  for (int k = 0; k < 2; ++k) {
    std::size_t i = order[k];
    Tensor fi = glu_expert_forward(layer.experts[i], x);
    expected = add(expected, scale(fi, g.data[i]));
  }

  Tensor out = moe_forward(layer, x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("moe routing log records K selections per token") {
  RandomStream rng(24);
  MoELayer layer = MoELayer::init(5, 2, 4, 6, rng);
  Tensor x = Tensor::randn(3, 4, rng);
  std::vector<TokenRouting> log;
  moe_forward(layer, x, false, &log);
  REQUIRE(log.size() == 3);
  for (const TokenRouting& tr : log) {
    CHECK(tr.selected_post.size() == 2);
    CHECK(tr.scores_pre.size() == 5);
    CHECK(tr.selected_pre == tr.selected_post);
  }
}

TEST_CASE("decompose_mlp identity at E=1 and zero W_down") {
  RandomStream rng(31);
  Tensor W_up = Tensor::randn(6, 4, rng);
  Tensor W_gate = Tensor::randn(6, 4, rng);
  Tensor W_down = Tensor::randn(4, 6, rng);

  std::vector<GluExpert> one = decompose_mlp(W_up, W_gate, W_down, 1);
  REQUIRE(one.size() == 1);
  for (std::size_t i = 0; i < W_up.size(); ++i) {
    CHECK(one[0].W_up.data[i] == W_up.data[i]);
    CHECK(one[0].W_gate.data[i] == W_gate.data[i]);
  }
  for (std::size_t i = 0; i < W_down.size(); ++i) {
    CHECK(one[0].W_down.data[i] == W_down.data[i]);
  }

  Tensor zero_down(4, 6);
  std::vector<GluExpert> subs = decompose_mlp(W_up, W_gate, zero_down, 3);
  Tensor x = Tensor::randn(1, 4, rng);
  for (const GluExpert& s : subs) {
    CHECK(norm(glu_expert_forward(s, x)) == 0.0);
  }

  CHECK_THROWS_AS(decompose_mlp(W_up, W_gate, W_down, 4), ConfigError);
}

TEST_CASE("decomposition equivalence on random MLPs") {
  LemmaReport rep = verify_lemma(20, 25, 1234);
  CHECK(rep.pass);
  CHECK(rep.max_abs_error <= 1e-10);
}

TEST_CASE("truncation error analytic cases") {
  RandomStream rng(41);
  std::vector<GluExpert> experts;
  experts.push_back(GluExpert::init(3, 4, rng));
  experts.push_back(GluExpert::init(3, 4, rng));
  Tensor x = Tensor::randn(1, 3, rng);

  Tensor g_all = Tensor::row({0.6, 0.4});
  CHECK(truncation_error(experts, g_all, 2, x) == 0.0);

  Tensor g = Tensor::row({0.9, 0.1});
  Tensor f2 = glu_expert_forward(experts[1], x);
  double expected = 0.01 * dot(f2, f2);
  CHECK(truncation_error(experts, g, 1, x) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("truncation error equals dense-minus-sparse energy") {
  RandomStream rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t E = 3 + rng.uniform_index(4);
    int K = 1 + static_cast<int>(rng.uniform_index(E - 1));
    MoELayer layer = MoELayer::init(E, K, 4, 5, rng);
    Tensor x = Tensor::randn(1, 4, rng);

    Tensor dense = moe_forward(layer, x, true);
    Tensor sparse = moe_forward(layer, x, false);
    Tensor diff = sub(dense, sparse);
    double energy = dot(diff, diff);

    Tensor g = route(layer.router, x);
    double L = truncation_error(layer.experts, g, K, x);
    CHECK(std::fabs(L - energy) <= 1e-9);
  }
}

TEST_CASE("jacobi eigenvalues and gershgorin on known matrices") {
  Tensor m = Tensor::from_rows(2, 2, {2, 1, 1, 2});
  std::vector<double> eig = jacobi_eigenvalues(m);
  std::sort(eig.begin(), eig.end());
  CHECK(eig[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(eig[1] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(gershgorin_max_bound(m) == doctest::Approx(3.0));

  Tensor diag = Tensor::from_rows(3, 3, {5, 0, 0, 0, -1, 0, 0, 0, 2});
  std::vector<double> de = jacobi_eigenvalues(diag);
  std::sort(de.begin(), de.end());
  CHECK(de[0] == doctest::Approx(-1.0));
  CHECK(de[2] == doctest::Approx(5.0));

  // random symmetric: every eigenvalue within the Gershgorin estimate
  RandomStream rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = Tensor::randn(5, 5, rng);
    Tensor sym = scale(add(a, transpose(a)), 0.5);
    std::vector<double> ev = jacobi_eigenvalues(sym);
    double bound = gershgorin_max_bound(sym);
    for (double v : ev) CHECK(v <= bound + 1e-9);
  }
}

TEST_CASE("theorem bound with orthonormal unit expert outputs") {
  // Experts engineered so f_i(x) = e_i exactly: hidden size 1, the scalar
  // activation path gives s = silu(2)*2, and W_down = e_i / s.
  std::size_t E = 4;
  std::size_t d = 4;
  double s = (2.0 / (1.0 + std::exp(-2.0))) * 2.0;
  std::vector<GluExpert> experts;
  for (std::size_t i = 0; i < E; ++i) {
    GluExpert e;
    e.W_up = Tensor(1, d);
    e.W_up.data[0] = 1.0;
    e.W_gate = e.W_up;
    e.W_down = Tensor(d, 1);
    e.W_down.at(i, 0) = 1.0 / s;
    experts.push_back(e);
  }
  Tensor x(1, d);
  x.data[0] = 2.0;
  Tensor g = Tensor::row({0.4, 0.3, 0.2, 0.1});

  TheoremReport rep = theorem_bound(experts, g, 2, x);
  CHECK(rep.B == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.mu <= 1e-12);
  // orthonormal discarded outputs: L = sum of discarded g^2 = rhs
  double discarded = 0.2 * 0.2 + 0.1 * 0.1;
  CHECK(rep.trunc_error == doctest::Approx(discarded).epsilon(1e-10));
  CHECK(rep.rhs_bound == doctest::Approx(discarded).epsilon(1e-10));
  CHECK(rep.exact_lambda_max == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("theorem bound at full activation") {
  RandomStream rng(61);
  std::vector<GluExpert> experts;
  for (int i = 0; i < 3; ++i) experts.push_back(GluExpert::init(4, 5, rng));
  Tensor x = Tensor::randn(1, 4, rng);
  Tensor g = Tensor::row({0.5, 0.3, 0.2});
  TheoremReport rep = theorem_bound(experts, g, 3, x);
  CHECK(rep.trunc_error == 0.0);
  CHECK(rep.rhs_bound == 0.0);
  CHECK(rep.gram.rows == 0);
}

TEST_CASE("theorem sweep over random instances") {
  TheoremSweepReport rep = verify_theorem(120, 777);
  CHECK(rep.pass);
  CHECK(rep.bound_violations == 0);
  CHECK(rep.monotonicity_violations == 0);
  CHECK(rep.max_ratio <= 1.0 + 1e-9);
}

TEST_CASE("moe graph builder matches value forward and is differentiable") {
  RandomStream rng(71);
  MoELayer layer = MoELayer::init(3, 2, 4, 5, rng);
  Tensor x = Tensor::randn(2, 4, rng);

  Graph g;
  Var out = moe_node(g, layer, g.leaf(x));
  Tensor value_path = moe_forward(layer, x);
  REQUIRE(g.value(out).same_shape(value_path));
  for (std::size_t i = 0; i < value_path.size(); ++i) {
    CHECK(g.value(out).data[i] ==
          doctest::Approx(value_path.data[i]).epsilon(1e-12));
  }

  Tensor proj = Tensor::randn(2, 4, rng);
  auto f = [&](Graph& gg) {
    Var o = moe_node(gg, layer, gg.leaf(x));
    return gg.sum_all(gg.mul(o, gg.leaf(proj)));
  };
  std::vector<Tensor*> params = {&layer.router.W_g};
  for (GluExpert& e : layer.experts) {
    params.push_back(&e.W_up);
    params.push_back(&e.W_gate);
    params.push_back(&e.W_down);
  }
  CHECK(grad_check(f, params) <= 1e-4);
}

TEST_CASE("lemma and theorem reports serialize to json") {
  LemmaReport rep = verify_lemma(2, 3, 1);
  std::string j = rep.to_json();
  CHECK(j.find("\"pass\": true") != std::string::npos);
  CHECK(j.find("max_abs_error") != std::string::npos);

  TheoremSweepReport ts = verify_theorem(5, 2);
  std::string tj = ts.to_json();
  CHECK(tj.find("\"bound_violations\": 0") != std::string::npos);
}
