#include "mome/verification.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mome/error.hpp"
#include "mome/rng.hpp"
#include "mome/spectral.hpp"
#include "mome/tensor_ops.hpp"

namespace mome {

TheoremReport theorem_bound(const std::vector<GluExpert>& experts,
                            const Tensor& g, int K, const Tensor& x) {
  std::size_t E = experts.size();
  if (g.size() != E) {
    throw DimensionError("theorem_bound: " + std::to_string(E) +
                         " experts but " + std::to_string(g.size()) +
                         " scores");
  }
  Tensor g_row = g.reshaped(1, E);

  std::vector<Tensor> outs;
  outs.reserve(E);
  for (const GluExpert& e : experts) outs.push_back(glu_expert_forward(e, x));

  TheoremReport rep;
  for (std::size_t i = 0; i < E; ++i) {
    rep.B = std::max(rep.B, norm(outs[i]));
    for (std::size_t j = i + 1; j < E; ++j) {
      rep.mu = std::max(rep.mu, std::fabs(dot(outs[i], outs[j])));
    }
  }

  std::vector<std::size_t> kept = topk_indices(g_row, K);
  std::vector<bool> in_topk(E, false);
  for (std::size_t i : kept) in_topk[i] = true;
  std::vector<std::size_t> discarded;
  for (std::size_t i = 0; i < E; ++i) {
    if (!in_topk[i]) discarded.push_back(i);
  }

  std::size_t m = discarded.size();
  rep.gram = Tensor(m, m);
  double discarded_energy = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    discarded_energy += g_row.data[discarded[a]] * g_row.data[discarded[a]];
    for (std::size_t b = 0; b < m; ++b) {
      rep.gram.at(a, b) = dot(outs[discarded[a]], outs[discarded[b]]);
    }
  }

  rep.trunc_error = truncation_error(experts, g, K, x);
  if (m == 0) {
    rep.rhs_bound = 0.0;
    rep.gershgorin_bound = 0.0;
    rep.exact_lambda_max = 0.0;
  } else {
    rep.gershgorin_bound = gershgorin_max_bound(rep.gram);
    std::vector<double> eig = jacobi_eigenvalues(rep.gram);
    double lo = eig[0];
    double hi = eig[0];
    for (double v : eig) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    rep.exact_lambda_max = hi;
    if (lo < -1e-9) {
      throw Error("theorem_bound: Gram matrix not PSD (min eigenvalue " +
                  std::to_string(lo) + ")");
    }
    double factor =
        rep.B * rep.B + static_cast<double>(E - static_cast<std::size_t>(K) - 1) * rep.mu;
    rep.rhs_bound = factor * discarded_energy;
  }

  if (rep.trunc_error < 0.0) {
    throw Error("theorem_bound: negative truncation error");
  }
  if (rep.exact_lambda_max > rep.gershgorin_bound + 1e-9) {
    throw Error("theorem_bound: lambda_max " +
                std::to_string(rep.exact_lambda_max) +
                " exceeds Gershgorin estimate " +
                std::to_string(rep.gershgorin_bound));
  }
  if (rep.trunc_error > rep.rhs_bound + 1e-9) {
    throw Error("theorem_bound: truncation error " +
                std::to_string(rep.trunc_error) + " exceeds bound " +
                std::to_string(rep.rhs_bound));
  }
  return rep;
}

namespace {

// Direct dense GLU evaluation with explicit loops; deliberately bypasses
// GluExpert so the decomposition check compares two code paths.
Tensor dense_glu_reference(const Tensor& W_up, const Tensor& W_gate,
                           const Tensor& W_down, const Tensor& x) {
  std::size_t hidden = W_up.rows;
  std::size_t d = W_up.cols;
  std::size_t r = W_down.rows;
  Tensor h(1, hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    double up = 0.0;
    double gate = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      up += W_up.at(i, j) * x.data[j];
      gate += W_gate.at(i, j) * x.data[j];
    }
    h.data[i] = up * sigmoid_scalar(up) * gate;
  }
  Tensor out(1, r);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hidden; ++j) {
      acc += W_down.at(i, j) * h.data[j];
    }
    out.data[i] = acc;
  }
  return out;
}

}  // namespace

LemmaReport verify_lemma(std::size_t trials, std::size_t probes_per_trial,
                         std::uint64_t seed) {
  LemmaReport rep;
  rep.trials = trials;
  rep.probes_per_trial = probes_per_trial;

  const int experts_choices[] = {2, 4, 8};
  for (std::size_t t = 0; t < trials; ++t) {
    RandomStream rng = RandomStream::derive(seed, t);
    std::size_t d = 2 + rng.uniform_index(15);  // 2..16
    int E = experts_choices[rng.uniform_index(3)];
    std::size_t max_c = 64 / static_cast<std::size_t>(E);
    std::size_t C = 1 + rng.uniform_index(max_c);
    std::size_t hidden = static_cast<std::size_t>(E) * C;

    Tensor W_up = Tensor::randn(hidden, d, rng);
    Tensor W_gate = Tensor::randn(hidden, d, rng);
    Tensor W_down = Tensor::randn(d, hidden, rng);
    std::vector<GluExpert> subs = decompose_mlp(W_up, W_gate, W_down, E);

    for (std::size_t p = 0; p < probes_per_trial; ++p) {
      Tensor x = Tensor::randn(1, d, rng);
      Tensor full = dense_glu_reference(W_up, W_gate, W_down, x);
      Tensor sum(1, d);
      for (const GluExpert& sub : subs) {
        sum = add(sum, glu_expert_forward(sub, x));
      }
      for (std::size_t j = 0; j < d; ++j) {
        rep.max_abs_error = std::max(rep.max_abs_error,
                                     std::fabs(full.data[j] - sum.data[j]));
      }
    }
  }
  rep.pass = rep.max_abs_error <= rep.tolerance;
  return rep;
}

TheoremSweepReport verify_theorem(std::size_t trials, std::uint64_t seed) {
  TheoremSweepReport rep;
  rep.trials = trials;
  const RouterActivation acts[] = {RouterActivation::softmax,
                                   RouterActivation::sigmoid,
                                   RouterActivation::identity};

  for (std::size_t t = 0; t < trials; ++t) {
    RandomStream rng = RandomStream::derive(seed ^ 0x7eb1u, t);
    std::size_t E = 3 + rng.uniform_index(6);  // 3..8
    int K = 1 + static_cast<int>(rng.uniform_index(E - 1));
    std::size_t d = 2 + rng.uniform_index(11);
    std::size_t hidden = 2 + rng.uniform_index(15);

    std::vector<GluExpert> experts;
    for (std::size_t i = 0; i < E; ++i) {
      experts.push_back(GluExpert::init(d, hidden, rng));
    }
    Router router = Router::init(E, d, rng, acts[t % 3]);
    Tensor x = Tensor::randn(1, d, rng);
    Tensor g = route(router, x);

    TheoremReport r = theorem_bound(experts, g, K, x);
    if (r.trunc_error > r.rhs_bound + 1e-9) rep.bound_violations++;
    if (r.exact_lambda_max > r.gershgorin_bound + 1e-9) {
      rep.spectral_violations++;
    }
    if (r.rhs_bound > 0.0) {
      rep.max_ratio = std::max(rep.max_ratio, r.trunc_error / r.rhs_bound);
    }

    if (K + 1 <= static_cast<int>(E)) {
      TheoremReport r_next = theorem_bound(experts, g, K + 1, x);
      double tol = 1e-9 * std::max(1.0, r.rhs_bound);
      if (r_next.rhs_bound > r.rhs_bound + tol) rep.monotonicity_violations++;
    }

    TheoremReport r_full = theorem_bound(experts, g, static_cast<int>(E), x);
    if (r_full.trunc_error != 0.0 || r_full.rhs_bound != 0.0) {
      rep.full_activation_failures++;
    }
  }

  rep.pass = rep.bound_violations == 0 && rep.spectral_violations == 0 &&
             rep.monotonicity_violations == 0 &&
             rep.full_activation_failures == 0;
  return rep;
}

std::string LemmaReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["probes_per_trial"] = probes_per_trial;
  j["max_abs_error"] = max_abs_error;
  j["tolerance"] = tolerance;
  j["pass"] = pass;
  return j.dump(2);
}

std::string TheoremSweepReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["bound_violations"] = bound_violations;
  j["spectral_violations"] = spectral_violations;
  j["monotonicity_violations"] = monotonicity_violations;
  j["full_activation_failures"] = full_activation_failures;
  j["max_ratio"] = max_ratio;
  j["pass"] = pass;
  return j.dump(2);
}

}  // namespace mome
