#pragma once

#include <vector>

#include "mome/tensor.hpp"

namespace mome {

// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, unsorted.
// Intended for the small Gram matrices arising in the truncation-bound
// analysis; no attempt at large-scale performance.
std::vector<double> jacobi_eigenvalues(const Tensor& sym, double tol = 1e-13,
                                       int max_sweeps = 64);

// max_i (a_ii + Σ_{j≠i} |a_ij|): upper bound on the largest eigenvalue of a
// symmetric matrix by the Gershgorin circle theorem.
double gershgorin_max_bound(const Tensor& sym);

}  // namespace mome
