#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mome/moe.hpp"
#include "mome/tensor.hpp"

namespace mome {

// Result of the truncation-bound analysis for one (experts, g, K, x)
// instance. All invariants are enforced on construction.
struct TheoremReport {
  double trunc_error = 0.0;       // L(x), energy of the discarded mixture
  double B = 0.0;                 // max_i ||f_i(x)|| over all experts
  double mu = 0.0;                // max_{i!=j} |<f_i, f_j>| over all pairs
  Tensor gram;                    // (E-K)x(E-K) Gram of discarded outputs
  double gershgorin_bound = 0.0;  // spectral estimate for gram
  double exact_lambda_max = 0.0;  // largest eigenvalue of gram
  double rhs_bound = 0.0;         // [B^2 + (E-K-1)mu] * sum of discarded g_i^2
};

// Computes the report and checks: L >= 0, gram PSD within 1e-9,
// exact_lambda_max <= gershgorin_bound + 1e-9, L <= rhs_bound + 1e-9.
// With K == E the discarded set is empty: L = rhs = 0 and gram is 0x0.
TheoremReport theorem_bound(const std::vector<GluExpert>& experts,
                            const Tensor& g, int K, const Tensor& x);

// Randomized check that a dense GLU MLP equals the sum of its sub-experts
// after block decomposition.
struct LemmaReport {
  std::size_t trials = 0;
  std::size_t probes_per_trial = 0;
  double max_abs_error = 0.0;
  double tolerance = 1e-10;
  bool pass = false;

  std::string to_json() const;
};

LemmaReport verify_lemma(std::size_t trials, std::size_t probes_per_trial,
                         std::uint64_t seed);

// Monte-Carlo sweep of the truncation bound across random layers.
struct TheoremSweepReport {
  std::size_t trials = 0;
  std::size_t bound_violations = 0;        // L > rhs + tol
  std::size_t spectral_violations = 0;     // lambda_max > gershgorin + tol
  std::size_t monotonicity_violations = 0; // rhs(K+1) > rhs(K) + tol
  std::size_t full_activation_failures = 0;  // K=E with L or rhs nonzero
  double max_ratio = 0.0;  // max over trials of L / rhs (rhs > 0)
  bool pass = false;

  std::string to_json() const;
};

TheoremSweepReport verify_theorem(std::size_t trials, std::uint64_t seed);

}  // namespace mome
